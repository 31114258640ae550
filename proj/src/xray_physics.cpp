#include "xraycast/xray_physics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace xraycast {

namespace {

void check_same_size(const Image& a, const Image& b, const char* what)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(what) + ": maps differ in size");
}

// First (row-major) index of the maximum.
Eigen::Index first_argmax(const Image& image)
{
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < image.size(); ++i)
        if (image.data()[i] > image.data()[best])
            best = i;
    return best;
}

} // namespace

void MaterialSpectrum::validate() const
{
    if (bins.empty())
        throw std::invalid_argument("spectrum: at least one energy bin is required");
    for (std::size_t i = 0; i < bins.size(); ++i) {
        const auto& b = bins[i];
        const std::string at = "spectrum: bin " + std::to_string(i) + ": ";
        if (!(b.weight > 0.0) || !std::isfinite(b.weight))
            throw std::invalid_argument(at + "weight must be > 0");
        if (!(b.mu_bone_per_mm > 0.0) || !std::isfinite(b.mu_bone_per_mm))
            throw std::invalid_argument(at + "mu_bone_per_mm must be > 0");
        if (!(b.mu_tissue_per_mm > 0.0) || !std::isfinite(b.mu_tissue_per_mm))
            throw std::invalid_argument(at + "mu_tissue_per_mm must be > 0");
        if (!std::isfinite(b.energy_keV))
            throw std::invalid_argument(at + "energy_keV must be finite");
    }
    if (!(tissue_weight >= kMinTissueWeight && tissue_weight <= kMaxTissueWeight))
        throw std::invalid_argument("spectrum: tissue_weight must lie in [0.5, 1.5]");
}

double MaterialSpectrum::total_weight() const
{
    double sum = 0.0;
    for (const auto& b : bins)
        sum += b.weight;
    return sum;
}

MaterialSpectrum MaterialSpectrum::single_bin(double mu_bone_per_mm, double mu_tissue_per_mm,
                                              double tissue_weight)
{
    return {{{0.0, 1.0, mu_bone_per_mm, mu_tissue_per_mm}}, tissue_weight};
}

MaterialSpectrum MaterialSpectrum::nist_four_bin()
{
    return {{{40.0, 0.25, 0.06655, 0.02688},
             {60.0, 0.25, 0.03148, 0.02048},
             {80.0, 0.25, 0.02229, 0.01823},
             {100.0, 0.25, 0.01855, 0.01693}},
            1.0};
}

MaterialThickness material_thickness(const VoxelVolume& ct, const VoxelVolume& mask,
                                     const ProjectionGeometry& geometry, const ViewPose& pose)
{
    if (ct.grid() != mask.grid())
        throw std::invalid_argument("material_thickness: mask grid differs from volume grid");
    VoxelVolume m = mask;
    m.set_kind(VolumeKind::mask);
    m.validate();

    VoxelVolume bone(ct.grid(), ct.values() * m.values());
    VoxelVolume tissue(ct.grid(), ct.values() * (1.0 - m.values()));
    return {forward_project(bone, geometry, pose), forward_project(tissue, geometry, pose)};
}

Image attenuate(const Image& t_bone, const Image& t_tissue, const MaterialSpectrum& spectrum)
{
    spectrum.validate();
    check_same_size(t_bone, t_tissue, "attenuate");
    if ((t_bone < 0.0).any() || (t_tissue < 0.0).any())
        throw std::invalid_argument("attenuate: thickness must be >= 0");
    if (!t_bone.allFinite() || !t_tissue.allFinite())
        throw std::invalid_argument("attenuate: thickness must be finite");

    Image out = Image::Zero(t_bone.rows(), t_bone.cols());
    for (std::size_t i = 0; i < spectrum.bins.size(); ++i) {
        const double mb = spectrum.bins[i].mu_bone_per_mm;
        const double mt = spectrum.effective_mu_tissue(i);
        out += spectrum.bins[i].weight * (-(mb * t_bone + mt * t_tissue)).exp();
    }
    return out;
}

Radiograph invert_for_display(Image attenuation)
{
    Radiograph r;
    const double peak = attenuation.size() ? attenuation.maxCoeff() : 0.0;
    r.values = peak - attenuation;
    r.attenuation = std::move(attenuation);
    return r;
}

Radiograph ct2xray(const VoxelVolume& ct, const VoxelVolume& mask,
                   const ProjectionGeometry& geometry, const ViewPose& pose,
                   const MaterialSpectrum& spectrum)
{
    const MaterialThickness t = material_thickness(ct, mask, geometry, pose);
    return ct2xray_from_thickness(t.bone.values, t.tissue.values, spectrum);
}

Radiograph ct2xray_from_thickness(const Image& t_bone, const Image& t_tissue,
                                  const MaterialSpectrum& spectrum)
{
    return invert_for_display(attenuate(t_bone, t_tissue, spectrum));
}

VoxelVolume segment_bone(const VoxelVolume& volume, double threshold)
{
    if (!std::isfinite(threshold))
        throw std::invalid_argument("segment_bone: threshold must be finite");
    VoxelVolume mask(volume.grid(), (volume.values() >= threshold).cast<double>(), VolumeKind::mask);
    return mask;
}

Radiograph clip_dynamic_range(const Radiograph& radiograph, double lo_fraction,
                              double hi_fraction)
{
    if (!(lo_fraction >= 0.0 && lo_fraction < hi_fraction && hi_fraction <= 1.0))
        throw std::invalid_argument("clip_dynamic_range: need 0 <= lo < hi <= 1");
    Radiograph out = radiograph;
    if (radiograph.values.size() == 0)
        return out;
    const double peak = radiograph.values.maxCoeff();
    if (peak <= 0.0)
        return out;
    const double lo = lo_fraction * peak;
    const double hi = hi_fraction * peak;
    out.values = (radiograph.values.max(lo).min(hi) - lo) / (hi_fraction - lo_fraction);
    return out;
}

ThicknessCotangent ct2xray_vjp_thickness(const Image& t_bone, const Image& t_tissue,
                                         const MaterialSpectrum& spectrum,
                                         const Image& output_cotangent)
{
    check_same_size(t_bone, output_cotangent, "ct2xray_vjp_thickness");
    const Image atten = attenuate(t_bone, t_tissue, spectrum);

    // display = max(atten) - atten
    Image g_atten = -output_cotangent;
    g_atten.data()[first_argmax(atten)] += output_cotangent.sum();

    ThicknessCotangent out{Image::Zero(t_bone.rows(), t_bone.cols()),
                           Image::Zero(t_bone.rows(), t_bone.cols())};
    for (std::size_t i = 0; i < spectrum.bins.size(); ++i) {
        const double mb = spectrum.bins[i].mu_bone_per_mm;
        const double mt = spectrum.effective_mu_tissue(i);
        const Image term = spectrum.bins[i].weight * (-(mb * t_bone + mt * t_tissue)).exp();
        out.bone -= g_atten * mb * term;
        out.tissue -= g_atten * mt * term;
    }
    return out;
}

VoxelVolume gradient_ct2xray_wrt_volume(const VoxelVolume& ct, const VoxelVolume& mask,
                                        const ProjectionGeometry& geometry, const ViewPose& pose,
                                        const MaterialSpectrum& spectrum,
                                        const Image& output_cotangent)
{
    const MaterialThickness t = material_thickness(ct, mask, geometry, pose);
    const ThicknessCotangent g =
        ct2xray_vjp_thickness(t.bone.values, t.tissue.values, spectrum, output_cotangent);

    const VoxelVolume g_bone =
        forward_project_vjp(ct.grid(), geometry, pose, {g.bone, pose, geometry});
    const VoxelVolume g_tissue =
        forward_project_vjp(ct.grid(), geometry, pose, {g.tissue, pose, geometry});
    const auto& m = mask.values();
    return VoxelVolume(ct.grid(), m * g_bone.values() + (1.0 - m) * g_tissue.values());
}

} // namespace xraycast
