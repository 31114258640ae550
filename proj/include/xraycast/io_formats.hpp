#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"

#include "xraycast/phantoms.hpp"
#include "xraycast/projector.hpp"
#include "xraycast/xray_physics.hpp"

namespace xraycast {

// On-disk formats. Arrays are little-endian float32, x-fastest, stored in
// `<name>.raw` next to a `<name>.json` sidecar carrying schema_version 1,
// the kind and the shape. Readers validate everything and throw ParseError
// (undecodable bytes, with the byte offset) or SchemaError (decoded but
// invalid, naming the key).

inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::json;

/// "<dir>/<stem>.json" for "<dir>/<stem>.raw" (or any extension).
std::filesystem::path sidecar_path(const std::filesystem::path& raw_path);

// JSON mappings for the value types.
Json to_json(const ViewPose& pose);
Json to_json(const ProjectionGeometry& geometry);
Json to_json(const MaterialSpectrum& spectrum);
Json to_json(const AnalyticPhantom& phantom);
Json to_json(const Grid& grid);

ViewPose pose_from_json(const Json& j);
ProjectionGeometry geometry_from_json(const Json& j);
MaterialSpectrum spectrum_from_json(const Json& j);
AnalyticPhantom phantom_from_json(const Json& j);

/// 16 hex digits (FNV-1a over the canonical JSON dump).
std::string geometry_hash(const ProjectionGeometry& geometry);

template <typename Scalar>
void write_volume(const Volume<Scalar>& volume, const std::filesystem::path& raw_path);
template <typename Scalar = double>
Volume<Scalar> read_volume(const std::filesystem::path& raw_path);

extern template void write_volume(const Volume<float>&, const std::filesystem::path&);
extern template void write_volume(const Volume<double>&, const std::filesystem::path&);
extern template Volume<float> read_volume(const std::filesystem::path&);
extern template Volume<double> read_volume(const std::filesystem::path&);

/// Generic 2D image: raw float32 plus a sidecar that always holds
/// schema_version, kind and size_px = [columns, rows].
struct StoredImage {
    Image values;
    Json sidecar;
};
void write_image(const Image& image, const std::filesystem::path& raw_path,
                 const std::string& kind, Json extra = Json::object());
StoredImage read_image(const std::filesystem::path& raw_path);

void write_thickness_map(const ThicknessMap& map, const std::filesystem::path& raw_path);
ThicknessMap read_thickness_map(const std::filesystem::path& raw_path);

/// Writes the display values as raw float32 + sidecar (with the peak
/// attenuation so the attenuation map can be restored) and a 16-bit PNG.
void write_radiograph(const Radiograph& radiograph, const std::filesystem::path& raw_path);
Radiograph read_radiograph(const std::filesystem::path& raw_path);

/// 16-bit grayscale PNG of `image`, mapping [0, peak] linearly onto
/// [0, 65535]. A non-positive peak writes a black image.
void write_png16(const Image& image, double peak, const std::filesystem::path& png_path);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const Json& j, const std::filesystem::path& path);

MaterialSpectrum read_spectrum(const std::filesystem::path& path);
AnalyticPhantom read_phantom(const std::filesystem::path& path);
ProjectionGeometry read_geometry(const std::filesystem::path& path);

} // namespace xraycast
