#include "xraycast/geometry.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace xraycast {

namespace {

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

Mat4 rigid(const Mat3& r, const Vec3& t)
{
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = r;
    m.topRightCorner<3, 1>() = t;
    return m;
}

} // namespace

ViewPose ViewPose::from_matrix(const Mat4& m)
{
    ViewPose pose;
    pose.matrix = m;
    pose.translation_mm = m.topRightCorner<3, 1>();
    const Mat3 r = m.topLeftCorner<3, 3>();
    // Rz(a) * Rx(e) has a zero in its (2, 0) entry.
    if (std::abs(r(2, 0)) < 1e-12) {
        pose.azimuth_deg = rad2deg(std::atan2(r(1, 0), r(0, 0)));
        pose.elevation_deg = rad2deg(std::atan2(r(2, 1), r(2, 2)));
    } else {
        pose.azimuth_deg = std::numeric_limits<double>::quiet_NaN();
        pose.elevation_deg = std::numeric_limits<double>::quiet_NaN();
    }
    return pose;
}

ViewPose make_pose(double azimuth_deg, double elevation_deg, const Vec3& translation_mm)
{
    if (!std::isfinite(azimuth_deg) || !std::isfinite(elevation_deg) ||
        !translation_mm.allFinite())
        throw std::invalid_argument("make_pose: angles and translation must be finite");

    const Mat3 r = (Eigen::AngleAxisd(deg2rad(azimuth_deg), Vec3::UnitZ()) *
                    Eigen::AngleAxisd(deg2rad(elevation_deg), Vec3::UnitX()))
                       .toRotationMatrix();
    ViewPose pose;
    pose.azimuth_deg = azimuth_deg;
    pose.elevation_deg = elevation_deg;
    pose.translation_mm = translation_mm;
    pose.matrix = rigid(r, translation_mm);
    return pose;
}

ViewPose compose(const ViewPose& a, const ViewPose& b)
{
    return ViewPose::from_matrix(a.matrix * b.matrix);
}

ViewPose inverse(const ViewPose& pose)
{
    const Mat3 rt = pose.rotation().transpose();
    return ViewPose::from_matrix(rigid(rt, -rt * pose.translation()));
}

void ProjectionGeometry::validate() const
{
    auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
    if (!positive(source_to_axis_mm))
        throw std::invalid_argument("geometry: source_to_axis_mm must be > 0");
    if (!positive(axis_to_detector_mm))
        throw std::invalid_argument("geometry: axis_to_detector_mm must be > 0");
    if (detector_size_px[0] < 1 || detector_size_px[1] < 1)
        throw std::invalid_argument("geometry: detector_size_px must be >= 1");
    if (!positive(detector_pitch_mm[0]) || !positive(detector_pitch_mm[1]))
        throw std::invalid_argument("geometry: detector_pitch_mm must be > 0");
    if (step_mm && !positive(*step_mm))
        throw std::invalid_argument("geometry: step_mm must be > 0");
}

bool BoundingBox::contains(const Vec3& p, double tolerance) const
{
    return (p.array() >= lower.array() - tolerance).all() &&
           (p.array() <= upper.array() + tolerance).all();
}

bool clip_to_box(const Vec3& origin, const Vec3& direction, const BoundingBox& box,
                 double& t_min, double& t_max)
{
    for (int axis = 0; axis < 3; ++axis) {
        const double d = direction[axis];
        const double o = origin[axis];
        if (d == 0.0) {
            if (o < box.lower[axis] || o > box.upper[axis])
                return false;
            continue;
        }
        double t0 = (box.lower[axis] - o) / d;
        double t1 = (box.upper[axis] - o) / d;
        if (t0 > t1)
            std::swap(t0, t1);
        t_min = std::max(t_min, t0);
        t_max = std::min(t_max, t1);
    }
    return t_min <= t_max;
}

RayGenerator::RayGenerator(const ProjectionGeometry& geometry, const ViewPose& pose,
                           const BoundingBox& volume_bounds)
    : geometry_(geometry), bounds_(volume_bounds), rotation_(pose.rotation()),
      offset_(volume_bounds.center() + pose.translation())
{
    geometry_.validate();
    axis_ = rotation_ * Vec3::UnitY();
    source_ = offset_ + rotation_ * Vec3(0.0, -geometry_.source_to_axis_mm, 0.0);
}

Ray RayGenerator::operator()(int column, int row) const
{
    const double u = (column - 0.5 * (geometry_.columns() - 1)) * geometry_.detector_pitch_mm[0];
    const double w = (0.5 * (geometry_.rows() - 1) - row) * geometry_.detector_pitch_mm[1];

    Ray ray;
    double t_min = -std::numeric_limits<double>::infinity();
    double t_max = std::numeric_limits<double>::infinity();
    if (geometry_.mode == BeamMode::cone_beam) {
        const Vec3 pixel = offset_ + rotation_ * Vec3(u, geometry_.axis_to_detector_mm, w);
        const Vec3 span = pixel - source_;
        const double length = span.norm();
        ray.origin_mm = source_;
        ray.direction = span / length;
        t_min = 0.0;
        t_max = length;
    } else {
        ray.origin_mm = offset_ + rotation_ * Vec3(u, 0.0, w);
        ray.direction = axis_;
    }
    ray.hit = clip_to_box(ray.origin_mm, ray.direction, bounds_, t_min, t_max);
    if (ray.hit) {
        ray.entry_t = t_min;
        ray.exit_t = t_max;
    }
    return ray;
}

Ray generate_ray(const ProjectionGeometry& geometry, const ViewPose& pose,
                 std::array<int, 2> pixel, const BoundingBox& volume_bounds)
{
    if (pixel[0] < 0 || pixel[0] >= geometry.columns() || pixel[1] < 0 ||
        pixel[1] >= geometry.rows())
        throw std::invalid_argument("generate_ray: pixel outside the detector");
    return RayGenerator(geometry, pose, volume_bounds)(pixel[0], pixel[1]);
}

} // namespace xraycast
