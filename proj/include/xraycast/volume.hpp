#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "xraycast/geometry.hpp"
#include "xraycast/types.hpp"

namespace xraycast {

/// Regular voxel lattice. `origin_mm` is the center of voxel (0, 0, 0);
/// voxel (i, j, k) is centered at origin + (i, j, k) * spacing and stored
/// at flat index i + nx * (j + ny * k).
struct Grid {
    Vec3i dims = Vec3i::Ones();
    Vec3 spacing_mm = Vec3::Ones();
    Vec3 origin_mm = Vec3::Zero();

    /// Grid of the given size whose center sits at the coordinate origin.
    static Grid centered(const Vec3i& dims, const Vec3& spacing_mm)
    {
        return {dims, spacing_mm, -0.5 * (dims.cast<double>() - Vec3::Ones()).cwiseProduct(spacing_mm)};
    }

    Eigen::Index voxel_count() const
    {
        return Eigen::Index(dims[0]) * dims[1] * dims[2];
    }

    Eigen::Index index(int i, int j, int k) const
    {
        return i + Eigen::Index(dims[0]) * (j + Eigen::Index(dims[1]) * k);
    }

    Vec3 voxel_center(int i, int j, int k) const
    {
        return origin_mm + Vec3(i, j, k).cwiseProduct(spacing_mm);
    }

    /// Hull of the voxel centers. Rays are clipped to this box so that every
    /// sample has its full interpolation support inside the grid.
    BoundingBox bounds() const
    {
        return {origin_mm, origin_mm + (dims.cast<double>() - Vec3::Ones()).cwiseProduct(spacing_mm)};
    }

    Vec3 center() const { return bounds().center(); }

    bool operator==(const Grid&) const = default;

    void validate() const
    {
        if ((dims.array() < 1).any())
            throw std::invalid_argument("grid: dims must be >= 1");
        if (!spacing_mm.allFinite() || (spacing_mm.array() <= 0.0).any())
            throw std::invalid_argument("grid: spacing must be > 0");
        if (!origin_mm.allFinite())
            throw std::invalid_argument("grid: origin must be finite");
    }
};

enum class VolumeKind { density, mask };

/// Dense scalar field on a Grid.
template <typename Scalar>
class Volume {
public:
    using Values = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    Volume() = default;

    explicit Volume(const Grid& grid, VolumeKind kind = VolumeKind::density)
        : grid_(grid), kind_(kind), values_(Values::Zero(grid.voxel_count()))
    {
        grid_.validate();
    }

    Volume(const Grid& grid, Values values, VolumeKind kind = VolumeKind::density)
        : grid_(grid), kind_(kind), values_(std::move(values))
    {
        grid_.validate();
        if (values_.size() != grid_.voxel_count())
            throw std::invalid_argument("volume: value count does not match dims");
    }

    const Grid& grid() const { return grid_; }
    const Vec3i& dims() const { return grid_.dims; }
    VolumeKind kind() const { return kind_; }
    void set_kind(VolumeKind kind) { kind_ = kind; }

    Values& values() { return values_; }
    const Values& values() const { return values_; }

    Scalar& operator()(int i, int j, int k) { return values_[grid_.index(i, j, k)]; }
    Scalar operator()(int i, int j, int k) const { return values_[grid_.index(i, j, k)]; }

    /// Throws std::invalid_argument on non-finite values or a mask outside [0, 1].
    void validate() const
    {
        grid_.validate();
        if (values_.size() != grid_.voxel_count())
            throw std::invalid_argument("volume: value count does not match dims");
        if (!values_.allFinite())
            throw std::invalid_argument("volume: values must be finite");
        if (kind_ == VolumeKind::mask &&
            ((values_ < Scalar(0)).any() || (values_ > Scalar(1)).any()))
            throw std::invalid_argument("volume: mask values must lie in [0, 1]");
    }

    template <typename Other>
    Volume<Other> cast() const
    {
        return Volume<Other>(grid_, values_.template cast<Other>(), kind_);
    }

private:
    Grid grid_;
    VolumeKind kind_ = VolumeKind::density;
    Values values_;
};

using VoxelVolume = Volume<double>;

inline std::string to_string(VolumeKind kind)
{
    return kind == VolumeKind::mask ? "mask" : "density";
}

/// The up-to-8 grid neighbors of a point with their trilinear weights.
/// Neighbors outside the grid are dropped (zero padding).
struct TrilinearStencil {
    struct Corner {
        Eigen::Index index;
        int k; // z index, used for slab ownership
        double weight;
    };
    std::array<Corner, 8> corners;
    int count = 0;
};

inline TrilinearStencil trilinear_stencil(const Grid& grid, const Vec3& point_mm)
{
    TrilinearStencil stencil;
    const Vec3 c = (point_mm - grid.origin_mm).cwiseQuotient(grid.spacing_mm);
    const Vec3 base = c.array().floor();
    const Vec3 f = c - base;
    // Points far outside the grid would overflow the int conversion.
    for (int a = 0; a < 3; ++a)
        if (!(base[a] >= -1.0 && base[a] <= grid.dims[a]))
            return stencil;
    const int i0 = int(base[0]), j0 = int(base[1]), k0 = int(base[2]);

    for (int dk = 0; dk < 2; ++dk) {
        const int k = k0 + dk;
        if (k < 0 || k >= grid.dims[2])
            continue;
        const double wz = dk ? f[2] : 1.0 - f[2];
        for (int dj = 0; dj < 2; ++dj) {
            const int j = j0 + dj;
            if (j < 0 || j >= grid.dims[1])
                continue;
            const double wyz = (dj ? f[1] : 1.0 - f[1]) * wz;
            for (int di = 0; di < 2; ++di) {
                const int i = i0 + di;
                if (i < 0 || i >= grid.dims[0])
                    continue;
                const double w = (di ? f[0] : 1.0 - f[0]) * wyz;
                if (w == 0.0)
                    continue;
                stencil.corners[stencil.count++] = {grid.index(i, j, k), k, w};
            }
        }
    }
    return stencil;
}

/// Trilinear read at a physical point; zero outside the grid.
template <typename Scalar>
double gather(const Volume<Scalar>& volume, const Vec3& point_mm)
{
    const TrilinearStencil s = trilinear_stencil(volume.grid(), point_mm);
    const auto& v = volume.values();
    double sum = 0.0;
    for (int n = 0; n < s.count; ++n)
        sum += s.corners[n].weight * double(v[s.corners[n].index]);
    return sum;
}

/// Transpose of gather: adds value * weight to each in-grid neighbor.
/// The accumulator must not be shared between threads.
inline void scatter(VoxelVolume& accumulator, const Vec3& point_mm, double value)
{
    const TrilinearStencil s = trilinear_stencil(accumulator.grid(), point_mm);
    auto& v = accumulator.values();
    for (int n = 0; n < s.count; ++n)
        v[s.corners[n].index] += value * s.corners[n].weight;
}

} // namespace xraycast
