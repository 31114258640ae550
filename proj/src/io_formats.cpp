#include "xraycast/io_formats.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <vector>

#include <png.h>

namespace xraycast {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// JSON field access with schema errors that name the key.

std::string key_path(const std::string& context, const std::string& key)
{
    return context.empty() ? key : context + "." + key;
}

void require_object(const Json& j, const std::string& context)
{
    if (!j.is_object())
        throw SchemaError((context.empty() ? std::string("document") : context) +
                          ": expected a JSON object");
}

void reject_unknown_keys(const Json& j, const std::set<std::string>& allowed,
                         const std::string& context)
{
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            throw SchemaError(key_path(context, key) + ": unknown key");
}

double number(const Json& j, const std::string& key, const std::string& context)
{
    if (!j.contains(key))
        throw SchemaError(key_path(context, key) + ": missing");
    const Json& v = j.at(key);
    if (!v.is_number())
        throw SchemaError(key_path(context, key) + ": expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d))
        throw SchemaError(key_path(context, key) + ": must be finite");
    return d;
}

double number_or(const Json& j, const std::string& key, const std::string& context,
                 double fallback)
{
    return j.contains(key) ? number(j, key, context) : fallback;
}

std::string string_field(const Json& j, const std::string& key, const std::string& context)
{
    if (!j.contains(key))
        throw SchemaError(key_path(context, key) + ": missing");
    if (!j.at(key).is_string())
        throw SchemaError(key_path(context, key) + ": expected a string");
    return j.at(key).get<std::string>();
}

std::vector<double> number_array(const Json& j, const std::string& key,
                                 const std::string& context, std::size_t size)
{
    if (!j.contains(key))
        throw SchemaError(key_path(context, key) + ": missing");
    const Json& v = j.at(key);
    if (!v.is_array() || v.size() != size)
        throw SchemaError(key_path(context, key) + ": expected an array of " +
                          std::to_string(size) + " numbers");
    std::vector<double> out;
    for (const auto& e : v) {
        if (!e.is_number() || !std::isfinite(e.get<double>()))
            throw SchemaError(key_path(context, key) + ": expected finite numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

Vec3 vec3(const Json& j, const std::string& key, const std::string& context)
{
    const auto v = number_array(j, key, context, 3);
    return {v[0], v[1], v[2]};
}

std::vector<int> int_array(const Json& j, const std::string& key, const std::string& context,
                           std::size_t size)
{
    const auto v = number_array(j, key, context, size);
    std::vector<int> out;
    for (double d : v) {
        if (d != std::floor(d) || d < 1 || d > 1 << 20)
            throw SchemaError(key_path(context, key) + ": expected positive integers");
        out.push_back(int(d));
    }
    return out;
}

Json vec_json(const Vec3& v) { return Json::array({v[0], v[1], v[2]}); }

// ---------------------------------------------------------------------------
// Raw float32 buffers.

float load_le_float(const unsigned char* p)
{
    std::uint32_t bits = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
                         std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
    return std::bit_cast<float>(bits);
}

void store_le_float(float f, unsigned char* p)
{
    const auto bits = std::bit_cast<std::uint32_t>(f);
    p[0] = bits & 0xff;
    p[1] = (bits >> 8) & 0xff;
    p[2] = (bits >> 16) & 0xff;
    p[3] = (bits >> 24) & 0xff;
}

template <typename Derived>
void write_raw(const Eigen::DenseBase<Derived>& values, const fs::path& path)
{
    std::vector<unsigned char> bytes(std::size_t(values.size()) * 4);
    for (Eigen::Index i = 0; i < values.size(); ++i)
        store_le_float(float(values.derived().data()[i]), bytes.data() + 4 * i);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out)
        throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::vector<float> read_raw(const fs::path& path, std::size_t expected_values)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ParseError("cannot open '" + path.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    const std::size_t expected = expected_values * 4;
    if (bytes.size() < expected)
        throw ParseError("'" + path.string() + "': truncated at byte offset " +
                         std::to_string(bytes.size()) + ", expected " + std::to_string(expected) +
                         " bytes, got " + std::to_string(bytes.size()));
    if (bytes.size() > expected)
        throw SchemaError("'" + path.string() + "': sidecar shape implies " +
                          std::to_string(expected) + " bytes but the file has " +
                          std::to_string(bytes.size()));
    std::vector<float> values(expected_values);
    for (std::size_t i = 0; i < expected_values; ++i) {
        values[i] = load_le_float(bytes.data() + 4 * i);
        if (!std::isfinite(values[i]))
            throw SchemaError("'" + path.string() + "': non-finite value at byte offset " +
                              std::to_string(4 * i));
    }
    return values;
}

void check_header(const Json& side, const std::string& context)
{
    require_object(side, context);
    const double version = number(side, "schema_version", context);
    if (version != kSchemaVersion)
        throw SchemaError(context + ".schema_version: unsupported version " +
                          Json(version).dump());
    if (side.contains("dtype") && side.at("dtype") != "float32")
        throw SchemaError(context + ".dtype: only float32 is supported");
    if (side.contains("byte_order") && side.at("byte_order") != "little")
        throw SchemaError(context + ".byte_order: only little is supported");
}

std::string to_hex(std::uint64_t v)
{
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

} // namespace

fs::path sidecar_path(const fs::path& raw_path)
{
    fs::path side = raw_path;
    side.replace_extension(".json");
    return side;
}

Json read_json_file(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open '" + path.string() + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ParseError("'" + path.string() + "': invalid JSON at byte offset " +
                         std::to_string(e.byte) + ": " + e.what());
    }
}

void write_json_file(const Json& j, const fs::path& path)
{
    std::ofstream out(path, std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

Json to_json(const ViewPose& pose)
{
    Json matrix = Json::array();
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            matrix.push_back(pose.matrix(r, c));
    Json j;
    j["azimuth_deg"] = std::isfinite(pose.azimuth_deg) ? Json(pose.azimuth_deg) : Json(nullptr);
    j["elevation_deg"] =
        std::isfinite(pose.elevation_deg) ? Json(pose.elevation_deg) : Json(nullptr);
    j["translation_mm"] = vec_json(pose.translation_mm);
    j["matrix"] = matrix;
    return j;
}

ViewPose pose_from_json(const Json& j)
{
    const std::string ctx = "pose";
    require_object(j, ctx);
    reject_unknown_keys(j, {"azimuth_deg", "elevation_deg", "translation_mm", "matrix"}, ctx);
    if (j.contains("matrix")) {
        const auto m = number_array(j, "matrix", ctx, 16);
        Mat4 mat;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                mat(r, c) = m[std::size_t(4 * r + c)];
        const Mat3 rot = mat.topLeftCorner<3, 3>();
        if (!(rot.transpose() * rot).isIdentity(1e-9) || std::abs(rot.determinant() - 1.0) > 1e-9 ||
            !mat.bottomRows<1>().isApprox(Eigen::RowVector4d(0, 0, 0, 1)))
            throw SchemaError("pose.matrix: not a rigid homogeneous transform");
        return ViewPose::from_matrix(mat);
    }
    const Vec3 t = j.contains("translation_mm") ? vec3(j, "translation_mm", ctx) : Vec3::Zero();
    return make_pose(number_or(j, "azimuth_deg", ctx, 0.0), number_or(j, "elevation_deg", ctx, 0.0),
                     t);
}

Json to_json(const ProjectionGeometry& g)
{
    Json j;
    j["mode"] = g.mode == BeamMode::cone_beam ? "cone_beam" : "parallel_beam";
    j["source_to_axis_mm"] = g.source_to_axis_mm;
    j["axis_to_detector_mm"] = g.axis_to_detector_mm;
    j["detector_size_px"] = {g.detector_size_px[0], g.detector_size_px[1]};
    j["detector_pitch_mm"] = {g.detector_pitch_mm[0], g.detector_pitch_mm[1]};
    j["step_mm"] = g.step_mm ? Json(*g.step_mm) : Json(nullptr);
    return j;
}

ProjectionGeometry geometry_from_json(const Json& j)
{
    const std::string ctx = "geometry";
    require_object(j, ctx);
    reject_unknown_keys(j,
                        {"mode", "source_to_axis_mm", "axis_to_detector_mm", "detector_size_px",
                         "detector_pitch_mm", "step_mm"},
                        ctx);
    ProjectionGeometry g;
    if (j.contains("mode")) {
        const std::string mode = string_field(j, "mode", ctx);
        if (mode == "cone_beam")
            g.mode = BeamMode::cone_beam;
        else if (mode == "parallel_beam")
            g.mode = BeamMode::parallel_beam;
        else
            throw SchemaError("geometry.mode: expected cone_beam or parallel_beam");
    }
    g.source_to_axis_mm = number_or(j, "source_to_axis_mm", ctx, g.source_to_axis_mm);
    g.axis_to_detector_mm = number_or(j, "axis_to_detector_mm", ctx, g.axis_to_detector_mm);
    if (j.contains("detector_size_px")) {
        const auto s = int_array(j, "detector_size_px", ctx, 2);
        g.detector_size_px = {s[0], s[1]};
    }
    if (j.contains("detector_pitch_mm")) {
        const auto p = number_array(j, "detector_pitch_mm", ctx, 2);
        g.detector_pitch_mm = {p[0], p[1]};
    }
    if (j.contains("step_mm") && !j.at("step_mm").is_null())
        g.step_mm = number(j, "step_mm", ctx);
    try {
        g.validate();
    } catch (const std::invalid_argument& e) {
        throw SchemaError(e.what());
    }
    return g;
}

std::string geometry_hash(const ProjectionGeometry& geometry)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : to_json(geometry).dump()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return to_hex(h);
}

Json to_json(const MaterialSpectrum& s)
{
    Json bins = Json::array();
    for (const auto& b : s.bins)
        bins.push_back({{"energy_keV", b.energy_keV},
                        {"weight", b.weight},
                        {"mu_bone_per_mm", b.mu_bone_per_mm},
                        {"mu_tissue_per_mm", b.mu_tissue_per_mm}});
    return {{"bins", bins}, {"tissue_weight", s.tissue_weight}};
}

MaterialSpectrum spectrum_from_json(const Json& j)
{
    const std::string ctx = "spectrum";
    require_object(j, ctx);
    reject_unknown_keys(j, {"bins", "tissue_weight", "description"}, ctx);
    if (!j.contains("bins") || !j.at("bins").is_array() || j.at("bins").empty())
        throw SchemaError("spectrum.bins: expected a non-empty array");

    MaterialSpectrum s;
    const auto& bins = j.at("bins");
    const double default_weight = 1.0 / double(bins.size());
    for (std::size_t i = 0; i < bins.size(); ++i) {
        const std::string at = "spectrum.bins[" + std::to_string(i) + "]";
        const Json& b = bins[i];
        require_object(b, at);
        reject_unknown_keys(b, {"energy_keV", "weight", "mu_bone_per_mm", "mu_tissue_per_mm"}, at);
        EnergyBin bin;
        bin.energy_keV = number_or(b, "energy_keV", at, 0.0);
        bin.weight = number_or(b, "weight", at, default_weight);
        bin.mu_bone_per_mm = number(b, "mu_bone_per_mm", at);
        bin.mu_tissue_per_mm = number(b, "mu_tissue_per_mm", at);
        if (!(bin.weight > 0.0))
            throw SchemaError(at + ".weight: must be > 0");
        if (!(bin.mu_bone_per_mm > 0.0))
            throw SchemaError(at + ".mu_bone_per_mm: must be > 0");
        if (!(bin.mu_tissue_per_mm > 0.0))
            throw SchemaError(at + ".mu_tissue_per_mm: must be > 0");
        s.bins.push_back(bin);
    }
    s.tissue_weight = number_or(j, "tissue_weight", ctx, 1.0);
    if (!(s.tissue_weight >= kMinTissueWeight && s.tissue_weight <= kMaxTissueWeight))
        throw SchemaError("spectrum.tissue_weight: must lie in [0.5, 1.5]");
    return s;
}

Json to_json(const AnalyticPhantom& phantom)
{
    static const char* shapes[] = {"sphere", "ellipsoid", "cylinder", "box"};
    static const char* axes[] = {"x", "y", "z"};
    Json prims = Json::array();
    for (const auto& p : phantom.primitives) {
        Json e{{"shape", shapes[int(p.shape)]},
               {"center_mm", vec_json(p.center_mm)},
               {"radii_mm", vec_json(p.radii_mm)},
               {"density", p.density},
               {"material", p.material == Material::bone ? "bone" : "tissue"}};
        if (p.shape == ShapeKind::cylinder)
            e["axis"] = axes[p.axis];
        prims.push_back(e);
    }
    return {{"primitives", prims}};
}

AnalyticPhantom phantom_from_json(const Json& j)
{
    const std::string ctx = "phantom";
    require_object(j, ctx);
    reject_unknown_keys(j, {"primitives", "description"}, ctx);
    if (!j.contains("primitives") || !j.at("primitives").is_array())
        throw SchemaError("phantom.primitives: expected an array");

    AnalyticPhantom ph;
    const auto& prims = j.at("primitives");
    for (std::size_t i = 0; i < prims.size(); ++i) {
        const std::string at = "phantom.primitives[" + std::to_string(i) + "]";
        const Json& e = prims[i];
        require_object(e, at);
        reject_unknown_keys(e, {"shape", "center_mm", "radii_mm", "density", "material", "axis"}, at);
        Primitive p;
        const std::string shape = string_field(e, "shape", at);
        if (shape == "sphere")
            p.shape = ShapeKind::sphere;
        else if (shape == "ellipsoid")
            p.shape = ShapeKind::ellipsoid;
        else if (shape == "cylinder")
            p.shape = ShapeKind::cylinder;
        else if (shape == "box")
            p.shape = ShapeKind::box;
        else
            throw SchemaError(at + ".shape: expected sphere, ellipsoid, cylinder or box");
        p.center_mm = vec3(e, "center_mm", at);
        if (e.contains("radii_mm") && e.at("radii_mm").is_number())
            p.radii_mm = Vec3::Constant(number(e, "radii_mm", at));
        else
            p.radii_mm = vec3(e, "radii_mm", at);
        p.density = number(e, "density", at);
        const std::string material = string_field(e, "material", at);
        if (material == "bone")
            p.material = Material::bone;
        else if (material == "tissue")
            p.material = Material::tissue;
        else
            throw SchemaError(at + ".material: expected bone or tissue");
        if (e.contains("axis")) {
            const std::string axis = string_field(e, "axis", at);
            if (axis == "x")
                p.axis = 0;
            else if (axis == "y")
                p.axis = 1;
            else if (axis == "z")
                p.axis = 2;
            else
                throw SchemaError(at + ".axis: expected x, y or z");
        }
        if (!(p.density >= 0.0))
            throw SchemaError(at + ".density: must be >= 0");
        const bool radii_ok = p.shape == ShapeKind::sphere ? p.radii_mm[0] > 0.0
                                                           : (p.radii_mm.array() > 0.0).all();
        if (!radii_ok)
            throw SchemaError(at + ".radii_mm: must be > 0");
        ph.primitives.push_back(p);
    }
    return ph;
}

Json to_json(const Grid& grid)
{
    return {{"dims", {grid.dims[0], grid.dims[1], grid.dims[2]}},
            {"spacing_mm", vec_json(grid.spacing_mm)},
            {"origin_mm", vec_json(grid.origin_mm)}};
}

MaterialSpectrum read_spectrum(const fs::path& path)
{
    return spectrum_from_json(read_json_file(path));
}

AnalyticPhantom read_phantom(const fs::path& path) { return phantom_from_json(read_json_file(path)); }

ProjectionGeometry read_geometry(const fs::path& path)
{
    return geometry_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------

template <typename Scalar>
void write_volume(const Volume<Scalar>& volume, const fs::path& raw_path)
{
    volume.validate();
    Json side = to_json(volume.grid());
    side["schema_version"] = kSchemaVersion;
    side["kind"] = to_string(volume.kind());
    side["dtype"] = "float32";
    side["byte_order"] = "little";
    write_raw(volume.values(), raw_path);
    write_json_file(side, sidecar_path(raw_path));
}

template <typename Scalar>
Volume<Scalar> read_volume(const fs::path& raw_path)
{
    const std::string ctx = "volume sidecar";
    const Json side = read_json_file(sidecar_path(raw_path));
    check_header(side, ctx);
    Grid grid;
    const auto dims = int_array(side, "dims", ctx, 3);
    grid.dims = {dims[0], dims[1], dims[2]};
    grid.spacing_mm = vec3(side, "spacing_mm", ctx);
    grid.origin_mm = vec3(side, "origin_mm", ctx);
    if ((grid.spacing_mm.array() <= 0.0).any())
        throw SchemaError(ctx + ".spacing_mm: must be > 0");
    const std::string kind = string_field(side, "kind", ctx);
    if (kind != "density" && kind != "mask")
        throw SchemaError(ctx + ".kind: expected density or mask");

    const auto raw = read_raw(raw_path, std::size_t(grid.voxel_count()));
    typename Volume<Scalar>::Values values(grid.voxel_count());
    for (Eigen::Index i = 0; i < values.size(); ++i)
        values[i] = Scalar(raw[std::size_t(i)]);
    Volume<Scalar> volume(grid, std::move(values),
                          kind == "mask" ? VolumeKind::mask : VolumeKind::density);
    try {
        volume.validate();
    } catch (const std::invalid_argument& e) {
        throw SchemaError(e.what());
    }
    return volume;
}

template void write_volume(const Volume<float>&, const fs::path&);
template void write_volume(const Volume<double>&, const fs::path&);
template Volume<float> read_volume(const fs::path&);
template Volume<double> read_volume(const fs::path&);

void write_image(const Image& image, const fs::path& raw_path, const std::string& kind, Json extra)
{
    if (!image.allFinite())
        throw std::invalid_argument("write_image: values must be finite");
    Json side = std::move(extra);
    side["schema_version"] = kSchemaVersion;
    side["kind"] = kind;
    side["size_px"] = {image.cols(), image.rows()};
    side["dtype"] = "float32";
    side["byte_order"] = "little";
    write_raw(image, raw_path);
    write_json_file(side, sidecar_path(raw_path));
}

StoredImage read_image(const fs::path& raw_path)
{
    const std::string ctx = "image sidecar";
    StoredImage out;
    out.sidecar = read_json_file(sidecar_path(raw_path));
    check_header(out.sidecar, ctx);
    string_field(out.sidecar, "kind", ctx);
    const auto size = int_array(out.sidecar, "size_px", ctx, 2);
    const auto raw = read_raw(raw_path, std::size_t(size[0]) * std::size_t(size[1]));
    out.values.resize(size[1], size[0]);
    for (Eigen::Index i = 0; i < out.values.size(); ++i)
        out.values.data()[i] = raw[std::size_t(i)];
    return out;
}

void write_thickness_map(const ThicknessMap& map, const fs::path& raw_path)
{
    Json extra{{"pose", to_json(map.pose)},
               {"geometry", to_json(map.geometry)},
               {"geometry_hash", geometry_hash(map.geometry)}};
    write_image(map.values, raw_path, "thickness_map", std::move(extra));
}

ThicknessMap read_thickness_map(const fs::path& raw_path)
{
    StoredImage img = read_image(raw_path);
    const std::string ctx = "thickness sidecar";
    if (img.sidecar.at("kind") != "thickness_map")
        throw SchemaError(ctx + ".kind: expected thickness_map");
    ThicknessMap map;
    map.values = std::move(img.values);
    if (img.sidecar.contains("pose"))
        map.pose = pose_from_json(img.sidecar.at("pose"));
    if (img.sidecar.contains("geometry")) {
        map.geometry = geometry_from_json(img.sidecar.at("geometry"));
        if (img.sidecar.contains("geometry_hash") &&
            img.sidecar.at("geometry_hash") != geometry_hash(map.geometry))
            throw SchemaError(ctx + ".geometry_hash: does not match geometry");
        if (map.geometry.columns() != map.columns() || map.geometry.rows() != map.rows())
            throw SchemaError(ctx + ".size_px: disagrees with geometry.detector_size_px");
    } else {
        map.geometry.detector_size_px = {map.columns(), map.rows()};
    }
    return map;
}

void write_png16(const Image& image, double peak, const fs::path& png_path)
{
    std::vector<png_uint_16> pixels(std::size_t(image.size()));
    for (Eigen::Index i = 0; i < image.size(); ++i) {
        const double v = peak > 0.0 ? image.data()[i] / peak : 0.0;
        pixels[std::size_t(i)] = png_uint_16(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
    }
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = png_uint_32(image.cols());
    png.height = png_uint_32(image.rows());
    png.format = PNG_FORMAT_LINEAR_Y;
    if (!png_image_write_to_file(&png, png_path.string().c_str(), 0, pixels.data(), 0, nullptr))
        throw std::runtime_error("PNG write failed for '" + png_path.string() + "': " + png.message);
}

void write_radiograph(const Radiograph& radiograph, const fs::path& raw_path)
{
    const double peak_display = radiograph.values.size() ? radiograph.values.maxCoeff() : 0.0;
    const double peak_atten = radiograph.attenuation.size() ? radiograph.attenuation.maxCoeff() : 0.0;
    write_image(radiograph.values, raw_path, "radiograph",
                {{"max_attenuation", peak_atten}, {"max_value", peak_display}});
    fs::path png = raw_path;
    png.replace_extension(".png");
    write_png16(radiograph.values, peak_display, png);
}

Radiograph read_radiograph(const fs::path& raw_path)
{
    StoredImage img = read_image(raw_path);
    const std::string ctx = "radiograph sidecar";
    if (img.sidecar.at("kind") != "radiograph")
        throw SchemaError(ctx + ".kind: expected radiograph");
    Radiograph r;
    r.values = std::move(img.values);
    const double peak = number_or(img.sidecar, "max_attenuation", ctx, 0.0);
    r.attenuation = peak - r.values;
    return r;
}

} // namespace xraycast
