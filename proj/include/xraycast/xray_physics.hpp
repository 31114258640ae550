#pragma once

#include <vector>

#include "xraycast/projector.hpp"

namespace xraycast {

struct EnergyBin {
    double energy_keV = 0.0;
    double weight = 1.0;
    /// Linear attenuation per mm at unit density (mass coefficient in
    /// cm^2/g divided by 10 when volumes hold g/cm^3).
    double mu_bone_per_mm = 0.0;
    double mu_tissue_per_mm = 0.0;
};

/// Two-material polychromatic attenuation table. The tissue coefficient
/// is always used as tissue_weight * mu_tissue.
struct MaterialSpectrum {
    std::vector<EnergyBin> bins;
    double tissue_weight = 1.0;

    /// Throws std::invalid_argument unless there is at least one bin and
    /// every weight, coefficient and the tissue weight are positive.
    void validate() const;
    double total_weight() const;
    double effective_mu_tissue(std::size_t bin) const
    {
        return tissue_weight * bins[bin].mu_tissue_per_mm;
    }

    static MaterialSpectrum single_bin(double mu_bone_per_mm, double mu_tissue_per_mm,
                                       double tissue_weight = 1.0);

    /// Built-in copy of data/spectrum_nist_4bin.json: 40/60/80/100 keV,
    /// equal weights summing to 1, cortical bone and soft tissue.
    static MaterialSpectrum nist_four_bin();
};

/// Valid configured range for tissue_weight.
inline constexpr double kMinTissueWeight = 0.5;
inline constexpr double kMaxTissueWeight = 1.5;

/// Display-convention radiograph: values = max(attenuation) - attenuation.
struct Radiograph {
    Image values;
    Image attenuation;
};

struct MaterialThickness {
    ThicknessMap bone;
    ThicknessMap tissue;
};

/// t_bone = FP(ct * mask), t_tissue = FP(ct * (1 - mask)).
MaterialThickness material_thickness(const VoxelVolume& ct, const VoxelVolume& mask,
                                     const ProjectionGeometry& geometry, const ViewPose& pose);

/// Per pixel: sum_E weight_E * exp(-(mu_bone,E t_bone + w mu_tissue,E t_tissue)).
Image attenuate(const Image& t_bone, const Image& t_tissue, const MaterialSpectrum& spectrum);

/// Inverts an attenuation map by its own maximum.
Radiograph invert_for_display(Image attenuation);

Radiograph ct2xray(const VoxelVolume& ct, const VoxelVolume& mask,
                   const ProjectionGeometry& geometry, const ViewPose& pose,
                   const MaterialSpectrum& spectrum);

/// Radiograph from (possibly externally refined) thickness maps.
Radiograph ct2xray_from_thickness(const Image& t_bone, const Image& t_tissue,
                                  const MaterialSpectrum& spectrum);

/// Plain DRR: the forward projection itself.
template <typename Scalar>
ThicknessMap drr(const Volume<Scalar>& volume, const ProjectionGeometry& geometry,
                 const ViewPose& pose)
{
    return forward_project(volume, geometry, pose);
}

/// 1 where value >= threshold, 0 elsewhere.
VoxelVolume segment_bone(const VoxelVolume& volume, double threshold);

/// Clamps display values to [lo * max, hi * max] and stretches the result
/// back over [0, max]. The linked attenuation is left untouched.
Radiograph clip_dynamic_range(const Radiograph& radiograph, double lo_fraction,
                              double hi_fraction);

/// Cotangents of the thickness maps given a cotangent on the displayed
/// radiograph. The max term routes its subgradient to the first argmax of
/// the attenuation map.
struct ThicknessCotangent {
    Image bone;
    Image tissue;
};

ThicknessCotangent ct2xray_vjp_thickness(const Image& t_bone, const Image& t_tissue,
                                         const MaterialSpectrum& spectrum,
                                         const Image& output_cotangent);

/// Reverse-mode gradient of <cotangent, ct2xray(ct, mask, ...)> w.r.t. ct.
VoxelVolume gradient_ct2xray_wrt_volume(const VoxelVolume& ct, const VoxelVolume& mask,
                                        const ProjectionGeometry& geometry, const ViewPose& pose,
                                        const MaterialSpectrum& spectrum,
                                        const Image& output_cotangent);

} // namespace xraycast
