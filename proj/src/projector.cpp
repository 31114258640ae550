#include "xraycast/projector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "xraycast/parallel.hpp"

namespace xraycast {

namespace {

void check_image_shape(const Image& image, const ProjectionGeometry& geometry, const char* what)
{
    if (image.cols() != geometry.columns() || image.rows() != geometry.rows())
        throw std::invalid_argument(std::string(what) + ": image is " +
                                    std::to_string(image.cols()) + "x" +
                                    std::to_string(image.rows()) + " but the detector is " +
                                    std::to_string(geometry.columns()) + "x" +
                                    std::to_string(geometry.rows()));
}

// Samples [first, last] of `ray` whose stencil can reach z slices
// [z0, z1). Conservative by one sample on each side; callers still filter
// corners by their z index.
bool slab_sample_range(const Ray& ray, double step, int samples, const Grid& grid, int z0,
                       int z1, int& first, int& last)
{
    const double sz = grid.spacing_mm[2];
    const double a = (ray.at(ray.entry_t + 0.5 * step)[2] - grid.origin_mm[2]) / sz;
    const double b = ray.direction[2] * step / sz;
    // A sample at continuous index c touches slices floor(c) and floor(c) + 1.
    const double lo = z0 - 1.0;
    const double hi = double(z1);
    if (std::abs(b) < 1e-300) {
        if (a < lo - 1e-9 || a > hi + 1e-9)
            return false;
        first = 0;
        last = samples - 1;
        return true;
    }
    double k_lo = (lo - a) / b;
    double k_hi = (hi - a) / b;
    if (k_lo > k_hi)
        std::swap(k_lo, k_hi);
    k_lo = std::clamp(std::floor(k_lo) - 1.0, 0.0, double(samples));
    k_hi = std::clamp(std::ceil(k_hi) + 1.0, -1.0, double(samples - 1));
    first = int(k_lo);
    last = int(k_hi);
    return first <= last;
}

// Transposed ray sampling shared by the adjoint and the backprojector.
// Adds coefficient(row, col, N) * w to `values` (and w to `weights` when
// given) for every gather weight w of every ray sample.
//
// Threads own disjoint z slabs of the output and each one walks every ray
// in pixel order, so each voxel sums its contributions in the same order
// no matter how many threads run. Results are bitwise thread invariant.
template <typename Coefficient>
void splat_rays(const Grid& grid, const ProjectionGeometry& geometry, const ViewPose& pose,
                double step, Coefficient coefficient, VoxelVolume& values, VoxelVolume* weights)
{
    const RayGenerator rays(geometry, pose, grid.bounds());
    const int nz = grid.dims[2];
    const int slabs = std::min(nz, std::max(1, 4 * num_threads()));
    auto& v = values.values();

#pragma omp parallel for schedule(dynamic, 1)
    for (int s = 0; s < slabs; ++s) {
        const int z0 = int(std::int64_t(nz) * s / slabs);
        const int z1 = int(std::int64_t(nz) * (s + 1) / slabs);
        for (int row = 0; row < geometry.rows(); ++row) {
            for (int col = 0; col < geometry.columns(); ++col) {
                const Ray ray = rays(col, row);
                if (!ray.hit)
                    continue;
                const int n = sample_count(ray, step);
                if (n == 0)
                    continue;
                const double c = coefficient(row, col, n);
                if (c == 0.0 && weights == nullptr)
                    continue;
                int first = 0, last = -1;
                if (!slab_sample_range(ray, step, n, grid, z0, z1, first, last))
                    continue;
                for (int k = first; k <= last; ++k) {
                    const TrilinearStencil st = trilinear_stencil(grid, sample_point(ray, step, k));
                    for (int m = 0; m < st.count; ++m) {
                        const auto& corner = st.corners[m];
                        if (corner.k < z0 || corner.k >= z1)
                            continue;
                        v[corner.index] += c * corner.weight;
                        if (weights)
                            weights->values()[corner.index] += corner.weight;
                    }
                }
            }
        }
    }
}

} // namespace

double resolved_step(const ProjectionGeometry& geometry, const Grid& grid)
{
    if (geometry.step_mm) {
        if (!(*geometry.step_mm > 0.0) || !std::isfinite(*geometry.step_mm))
            throw std::invalid_argument("geometry: step_mm must be > 0");
        return *geometry.step_mm;
    }
    return 0.5 * grid.spacing_mm.minCoeff();
}

int sample_count(const Ray& ray, double step)
{
    if (!ray.hit)
        return 0;
    return int(std::floor((ray.exit_t - ray.entry_t) / step));
}

template <typename Scalar>
ThicknessMap forward_project(const Volume<Scalar>& volume, const ProjectionGeometry& geometry,
                             const ViewPose& pose)
{
    volume.validate();
    const Grid& grid = volume.grid();
    const double step = resolved_step(geometry, grid);
    const RayGenerator rays(geometry, pose, grid.bounds());

    ThicknessMap out{Image::Zero(geometry.rows(), geometry.columns()), pose, geometry};
#pragma omp parallel for schedule(dynamic, 1)
    for (int row = 0; row < geometry.rows(); ++row) {
        for (int col = 0; col < geometry.columns(); ++col) {
            const Ray ray = rays(col, row);
            const int n = sample_count(ray, step);
            double sum = 0.0;
            for (int k = 0; k < n; ++k)
                sum += gather(volume, sample_point(ray, step, k));
            out.values(row, col) = sum * step;
        }
    }
    return out;
}

template ThicknessMap forward_project(const Volume<float>&, const ProjectionGeometry&,
                                      const ViewPose&);
template ThicknessMap forward_project(const Volume<double>&, const ProjectionGeometry&,
                                      const ViewPose&);

VoxelVolume forward_project_vjp(const Grid& volume_shape, const ProjectionGeometry& geometry,
                                const ViewPose& pose, const ThicknessMap& cotangent)
{
    geometry.validate();
    check_image_shape(cotangent.values, geometry, "forward_project_vjp");
    const double step = resolved_step(geometry, volume_shape);
    const Image& cot = cotangent.values;

    VoxelVolume grad(volume_shape);
    splat_rays(
        volume_shape, geometry, pose, step,
        [&](int row, int col, int) { return cot(row, col) * step; }, grad, nullptr);
    return grad;
}

VoxelVolume backproject_single(const ThicknessMap& image, const Grid& volume_shape,
                               const ProjectionGeometry& geometry, const ViewPose& pose)
{
    geometry.validate();
    check_image_shape(image.values, geometry, "backproject_single");
    const double step = resolved_step(geometry, volume_shape);
    const Image& values = image.values;

    VoxelVolume sum(volume_shape);
    VoxelVolume weight(volume_shape);
    splat_rays(
        volume_shape, geometry, pose, step,
        [&](int row, int col, int n) { return values(row, col) / (n * step); }, sum, &weight);

    auto& out = sum.values();
    const auto& w = weight.values();
    for (Eigen::Index i = 0; i < out.size(); ++i)
        out[i] = w[i] > 0.0 ? out[i] / w[i] : 0.0;
    return sum;
}

} // namespace xraycast
