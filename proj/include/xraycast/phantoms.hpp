#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xraycast/geometry.hpp"
#include "xraycast/volume.hpp"

namespace xraycast {

enum class ShapeKind { sphere, ellipsoid, cylinder, box };
enum class Material { bone, tissue };

/// One analytic solid. `radii_mm` holds the half-extent along each axis:
/// a sphere uses radii_mm[0] everywhere, a cylinder has an elliptic
/// cross-section in the two axes other than `axis` and half-length
/// radii_mm[axis], a box is given by its half-widths.
struct Primitive {
    ShapeKind shape = ShapeKind::sphere;
    Vec3 center_mm = Vec3::Zero();
    Vec3 radii_mm = Vec3::Ones();
    double density = 1.0;
    Material material = Material::tissue;
    int axis = 2; // cylinders only

    bool contains(const Vec3& p) const;

    /// Parametric interval [t0, t1] where the line origin + t * direction
    /// is inside the primitive, or nothing on a miss.
    std::optional<std::pair<double, double>> chord(const Vec3& origin,
                                                   const Vec3& direction) const;
};

/// Later primitives override earlier ones where they overlap.
struct AnalyticPhantom {
    std::vector<Primitive> primitives;

    /// Throws std::invalid_argument on negative density or non-positive radii.
    void validate() const;
};

/// Named presets: "sphere", "shell", "chest_toy".
AnalyticPhantom phantom_preset(std::string_view name);
std::vector<std::string> phantom_preset_names();

/// Bone threshold that separates the bone insert of a preset from its
/// tissue (midpoint of the two densities).
double preset_bone_threshold(std::string_view name);

struct RasterizedPhantom {
    VoxelVolume density;
    VoxelVolume bone_mask;
};

/// Voxel-center membership on a grid centered at the coordinate origin.
RasterizedPhantom rasterize(const AnalyticPhantom& phantom, const Vec3i& dims,
                            const Vec3& spacing_mm);
RasterizedPhantom rasterize(const AnalyticPhantom& phantom, const Grid& grid);

struct LineIntegral {
    double bone = 0.0;
    double tissue = 0.0;
};

/// Exact density-weighted chord lengths along the full line of `ray`
/// (the ray's entry/exit clipping is ignored).
LineIntegral analytic_line_integral(const AnalyticPhantom& phantom, const Ray& ray);

/// Visible sub-intervals of every primitive along a line after override
/// resolution, topmost first. Exposed for testing.
struct VisibleSegment {
    std::size_t primitive;
    double t0;
    double t1;
};
std::vector<VisibleSegment> visible_segments(const AnalyticPhantom& phantom, const Vec3& origin,
                                             const Vec3& direction);

} // namespace xraycast
