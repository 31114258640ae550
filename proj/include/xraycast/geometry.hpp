#pragma once

#include <array>
#include <optional>

#include "xraycast/types.hpp"

namespace xraycast {

/// Rigid view transform. `matrix` maps the source/detector rig frame into
/// the volume frame, relative to the volume center: a rig point q lands at
/// center + R q + translation_mm.
///
/// Rotation convention: azimuth about +Z (vertical) first, then elevation
/// about the rotated +X axis, i.e. R = Rz(azimuth) * Rx(elevation).
struct ViewPose {
    double azimuth_deg = 0.0;
    double elevation_deg = 0.0;
    Vec3 translation_mm = Vec3::Zero();
    Mat4 matrix = Mat4::Identity();

    Mat3 rotation() const { return matrix.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return matrix.topRightCorner<3, 1>(); }

    /// Builds a pose from a homogeneous rigid matrix. The angle fields are
    /// recovered when the rotation has the Rz*Rx form and are NaN otherwise.
    static ViewPose from_matrix(const Mat4& m);
};

ViewPose make_pose(double azimuth_deg, double elevation_deg,
                   const Vec3& translation_mm = Vec3::Zero());

/// Pose whose matrix is a.matrix * b.matrix (apply b, then a).
ViewPose compose(const ViewPose& a, const ViewPose& b);
ViewPose inverse(const ViewPose& pose);

enum class BeamMode { cone_beam, parallel_beam };

/// Source/detector layout in the rig frame. The viewing axis is +Y: the
/// source sits at y = -source_to_axis_mm, the detector plane at
/// y = +axis_to_detector_mm. Detector columns run along +X, rows along -Z
/// (row 0 is the top of the image).
struct ProjectionGeometry {
    BeamMode mode = BeamMode::cone_beam;
    double source_to_axis_mm = 1000.0;
    double axis_to_detector_mm = 500.0;
    std::array<int, 2> detector_size_px{256, 256}; // {columns, rows}
    std::array<double, 2> detector_pitch_mm{2.0, 2.0};
    /// Ray sample spacing; unset means half the minimum voxel spacing.
    std::optional<double> step_mm;

    /// Throws std::invalid_argument when a length or size is not positive.
    void validate() const;

    int columns() const { return detector_size_px[0]; }
    int rows() const { return detector_size_px[1]; }
};

struct BoundingBox {
    Vec3 lower;
    Vec3 upper;

    Vec3 center() const { return 0.5 * (lower + upper); }
    bool contains(const Vec3& p, double tolerance = 0.0) const;
};

struct Ray {
    Vec3 origin_mm = Vec3::Zero();
    Vec3 direction = Vec3::UnitY();
    double entry_t = 0.0;
    double exit_t = 0.0;
    bool hit = false;

    Vec3 at(double t) const { return origin_mm + t * direction; }
};

/// Clips the parametric interval [t_min, t_max] of a line against a box with
/// the slab method. Returns false when the line misses the box.
bool clip_to_box(const Vec3& origin, const Vec3& direction, const BoundingBox& box,
                 double& t_min, double& t_max);

/// Ray through detector pixel (column, row). The rig is placed about the
/// center of `volume_bounds` and moved by `pose`; the returned ray lives in
/// the volume frame with entry/exit clipped to the box.
Ray generate_ray(const ProjectionGeometry& geometry, const ViewPose& pose,
                 std::array<int, 2> pixel, const BoundingBox& volume_bounds);

/// Precomputed per-pose state for generating many rays.
class RayGenerator {
public:
    RayGenerator(const ProjectionGeometry& geometry, const ViewPose& pose,
                 const BoundingBox& volume_bounds);

    Ray operator()(int column, int row) const;

private:
    ProjectionGeometry geometry_;
    BoundingBox bounds_;
    Mat3 rotation_;
    Vec3 offset_; // volume center + pose translation
    Vec3 axis_;   // rotated viewing axis
    Vec3 source_; // cone beam only
};

} // namespace xraycast
