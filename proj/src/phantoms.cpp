#include "xraycast/phantoms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace xraycast {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTissueDensity = 1.0;
constexpr double kBoneDensity = 1.8;

Vec3 effective_radii(const Primitive& p)
{
    return p.shape == ShapeKind::sphere ? Vec3::Constant(p.radii_mm[0]) : p.radii_mm;
}

// Roots of |q + t dq|^2 = 1 in the selected components.
std::optional<std::pair<double, double>> unit_quadric(const Eigen::VectorXd& q,
                                                      const Eigen::VectorXd& dq)
{
    const double a = dq.squaredNorm();
    const double b = q.dot(dq);
    const double c = q.squaredNorm() - 1.0;
    if (a == 0.0) {
        if (c <= 0.0)
            return std::pair{-kInf, kInf};
        return std::nullopt;
    }
    const double disc = b * b - a * c;
    if (disc < 0.0)
        return std::nullopt;
    const double root = std::sqrt(disc);
    // Stable form of (-b -+ root) / a.
    const double qq = b >= 0.0 ? -(b + root) : -(b - root);
    double t0 = qq / a;
    double t1 = qq != 0.0 ? c / qq : -t0;
    if (t0 > t1)
        std::swap(t0, t1);
    return std::pair{t0, t1};
}

} // namespace

bool Primitive::contains(const Vec3& p) const
{
    const Vec3 q = (p - center_mm).cwiseQuotient(effective_radii(*this));
    switch (shape) {
    case ShapeKind::sphere:
    case ShapeKind::ellipsoid:
        return q.squaredNorm() <= 1.0;
    case ShapeKind::cylinder: {
        const int u = (axis + 1) % 3, v = (axis + 2) % 3;
        return q[u] * q[u] + q[v] * q[v] <= 1.0 && std::abs(q[axis]) <= 1.0;
    }
    case ShapeKind::box:
        return q.cwiseAbs().maxCoeff() <= 1.0;
    }
    return false;
}

std::optional<std::pair<double, double>> Primitive::chord(const Vec3& origin,
                                                          const Vec3& direction) const
{
    const Vec3 r = effective_radii(*this);
    const Vec3 q = (origin - center_mm).cwiseQuotient(r);
    const Vec3 dq = direction.cwiseQuotient(r);

    switch (shape) {
    case ShapeKind::sphere:
    case ShapeKind::ellipsoid:
        return unit_quadric(q, dq);
    case ShapeKind::cylinder: {
        const int u = (axis + 1) % 3, v = (axis + 2) % 3;
        auto side = unit_quadric(Eigen::Vector2d(q[u], q[v]), Eigen::Vector2d(dq[u], dq[v]));
        if (!side)
            return std::nullopt;
        double t0 = side->first, t1 = side->second;
        const BoundingBox slab{Vec3::Constant(-kInf), Vec3::Constant(kInf)};
        BoundingBox cap = slab;
        cap.lower[axis] = -1.0;
        cap.upper[axis] = 1.0;
        if (!clip_to_box(q, dq, cap, t0, t1))
            return std::nullopt;
        return std::pair{t0, t1};
    }
    case ShapeKind::box: {
        double t0 = -kInf, t1 = kInf;
        if (!clip_to_box(q, dq, {Vec3::Constant(-1.0), Vec3::Constant(1.0)}, t0, t1))
            return std::nullopt;
        return std::pair{t0, t1};
    }
    }
    return std::nullopt;
}

void AnalyticPhantom::validate() const
{
    for (std::size_t i = 0; i < primitives.size(); ++i) {
        const auto& p = primitives[i];
        const std::string at = "phantom: primitive " + std::to_string(i) + ": ";
        if (!(p.density >= 0.0) || !std::isfinite(p.density))
            throw std::invalid_argument(at + "density must be >= 0");
        const Vec3 r = effective_radii(p);
        if (!r.allFinite() || (r.array() <= 0.0).any())
            throw std::invalid_argument(at + "radii must be > 0");
        if (!p.center_mm.allFinite())
            throw std::invalid_argument(at + "center must be finite");
        if (p.axis < 0 || p.axis > 2)
            throw std::invalid_argument(at + "axis must be x, y or z");
    }
}

AnalyticPhantom phantom_preset(std::string_view name)
{
    AnalyticPhantom ph;
    if (name == "sphere") {
        ph.primitives.push_back({ShapeKind::sphere, Vec3::Zero(), Vec3::Constant(80.0),
                                 kTissueDensity, Material::tissue});
    } else if (name == "shell") {
        ph.primitives.push_back({ShapeKind::sphere, Vec3::Zero(), Vec3::Constant(90.0),
                                 kBoneDensity, Material::bone});
        ph.primitives.push_back({ShapeKind::sphere, Vec3::Zero(), Vec3::Constant(75.0),
                                 kTissueDensity, Material::tissue});
    } else if (name == "chest_toy") {
        // Tissue ellipsoid with six rib-like rods running left to right.
        ph.primitives.push_back({ShapeKind::ellipsoid, Vec3::Zero(), Vec3(110.0, 80.0, 100.0),
                                 kTissueDensity, Material::tissue});
        for (double y : {-40.0, 40.0})
            for (double z : {-50.0, 0.0, 50.0})
                ph.primitives.push_back({ShapeKind::cylinder, Vec3(0.0, y, z),
                                         Vec3(70.0, 8.0, 8.0), kBoneDensity, Material::bone, 0});
    } else {
        throw std::invalid_argument("unknown phantom preset '" + std::string(name) + "'");
    }
    return ph;
}

std::vector<std::string> phantom_preset_names() { return {"sphere", "shell", "chest_toy"}; }

double preset_bone_threshold(std::string_view name)
{
    phantom_preset(name); // validates the name
    return 0.5 * (kTissueDensity + kBoneDensity);
}

RasterizedPhantom rasterize(const AnalyticPhantom& phantom, const Vec3i& dims,
                            const Vec3& spacing_mm)
{
    return rasterize(phantom, Grid::centered(dims, spacing_mm));
}

RasterizedPhantom rasterize(const AnalyticPhantom& phantom, const Grid& grid)
{
    phantom.validate();
    RasterizedPhantom out{VoxelVolume(grid), VoxelVolume(grid, VolumeKind::mask)};
    for (int k = 0; k < grid.dims[2]; ++k)
        for (int j = 0; j < grid.dims[1]; ++j)
            for (int i = 0; i < grid.dims[0]; ++i) {
                const Vec3 p = grid.voxel_center(i, j, k);
                for (auto it = phantom.primitives.rbegin(); it != phantom.primitives.rend(); ++it) {
                    if (it->contains(p)) {
                        out.density(i, j, k) = it->density;
                        out.bone_mask(i, j, k) = it->material == Material::bone ? 1.0 : 0.0;
                        break;
                    }
                }
            }
    return out;
}

std::vector<VisibleSegment> visible_segments(const AnalyticPhantom& phantom, const Vec3& origin,
                                             const Vec3& direction)
{
    std::vector<VisibleSegment> out;
    std::vector<std::pair<double, double>> covered; // disjoint, sorted
    for (std::size_t n = phantom.primitives.size(); n-- > 0;) {
        const auto c = phantom.primitives[n].chord(origin, direction);
        if (!c || !(c->second > c->first))
            continue;
        auto [a, b] = *c;

        double cursor = a;
        for (const auto& [lo, hi] : covered) {
            if (hi <= cursor)
                continue;
            if (lo >= b)
                break;
            if (lo > cursor)
                out.push_back({n, cursor, lo});
            cursor = std::max(cursor, hi);
            if (cursor >= b)
                break;
        }
        if (cursor < b)
            out.push_back({n, cursor, b});

        covered.emplace_back(a, b);
        std::sort(covered.begin(), covered.end());
        std::vector<std::pair<double, double>> merged;
        for (const auto& iv : covered) {
            if (!merged.empty() && iv.first <= merged.back().second)
                merged.back().second = std::max(merged.back().second, iv.second);
            else
                merged.push_back(iv);
        }
        covered = std::move(merged);
    }
    return out;
}

LineIntegral analytic_line_integral(const AnalyticPhantom& phantom, const Ray& ray)
{
    LineIntegral out;
    const double scale = ray.direction.norm();
    for (const auto& seg : visible_segments(phantom, ray.origin_mm, ray.direction)) {
        const auto& p = phantom.primitives[seg.primitive];
        const double amount = (seg.t1 - seg.t0) * scale * p.density;
        (p.material == Material::bone ? out.bone : out.tissue) += amount;
    }
    return out;
}

} // namespace xraycast
