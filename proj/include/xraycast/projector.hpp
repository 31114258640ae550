#pragma once

#include "xraycast/geometry.hpp"
#include "xraycast/volume.hpp"

namespace xraycast {

/// Per-pixel path integral of a volume for one view.
struct ThicknessMap {
    Image values;
    ViewPose pose;
    ProjectionGeometry geometry;

    int columns() const { return int(values.cols()); }
    int rows() const { return int(values.rows()); }
};

/// Sample spacing used for `grid`: the geometry's step, or half the
/// smallest voxel spacing when unset.
double resolved_step(const ProjectionGeometry& geometry, const Grid& grid);

/// Number of midpoint samples a ray carries: floor((exit - entry) / step).
int sample_count(const Ray& ray, double step);

/// Sample k of a ray, at entry + (k + 1/2) * step.
inline Vec3 sample_point(const Ray& ray, double step, int k)
{
    return ray.at(ray.entry_t + (k + 0.5) * step);
}

/// I(x) = sum_k gather(volume, p_k) * step over the samples of each pixel's
/// ray. Pixels whose rays miss the volume are 0.
template <typename Scalar>
ThicknessMap forward_project(const Volume<Scalar>& volume, const ProjectionGeometry& geometry,
                             const ViewPose& pose);

extern template ThicknessMap forward_project(const Volume<float>&, const ProjectionGeometry&,
                                             const ViewPose&);
extern template ThicknessMap forward_project(const Volume<double>&, const ProjectionGeometry&,
                                             const ViewPose&);

/// Matched adjoint of forward_project: the gradient of <cotangent, FP(v)>
/// with respect to v. Scatters cotangent(x) * step along each ray with the
/// gather weights.
VoxelVolume forward_project_vjp(const Grid& volume_shape, const ProjectionGeometry& geometry,
                                const ViewPose& pose, const ThicknessMap& cotangent);

/// Single-image backprojection. Each ray x carries the density
/// I(x) / |l(x)|, where |l(x)| = N * step is its in-volume sample length.
/// A voxel receives the average of those densities over the rays that
/// touch it, weighted by the rays' accumulated interpolation weights, so
/// that projecting the result under the same view returns I for smooth
/// images. Voxels touched by no ray are 0.
VoxelVolume backproject_single(const ThicknessMap& image, const Grid& volume_shape,
                               const ProjectionGeometry& geometry, const ViewPose& pose);

} // namespace xraycast
