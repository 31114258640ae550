#pragma once

#include <cstddef>
#include <vector>

#include "xraycast/xray_physics.hpp"

namespace xraycast {

// Reverse radiograph synthesis: given a display-convention radiograph and
// estimated bone/tissue thickness maps, recover per-energy tissue
// thickness that reproduces the radiograph exactly, then re-synthesize it
// with a reduced bone coefficient.

struct SuppressionConfig {
    /// 0 replaces the bone coefficient by the tissue one, 1 keeps it.
    double alpha = 0.0;
    /// Floor for log arguments.
    double epsilon_log = 1e-12;

    void validate() const;
};

struct TissueReconstruction {
    std::vector<Image> per_bin;
    std::size_t clamp_count = 0;
};

struct SuppressionResult {
    std::vector<Image> t_recon_tissue;
    Radiograph suppressed;
    /// The input mapped onto the attenuation range of the reference.
    Image input_attenuation;
    /// max over pixels of |reassembled - input_attenuation| / input_attenuation.
    double reconstruction_residual = 0.0;
    std::size_t clamp_count = 0;
    double alpha = 0.0;
};

/// Inverts the display convention and maps the input affinely onto
/// [min(reference), max(reference)]. Throws DegenerateInputError when the
/// input maximum is not positive.
Image normalize_to_attenuation(const Image& input, const Image& attenuation_reference);

/// Per-bin share of the attenuation sum: w_i = weight_i exp(-(...)) / I_atten.
std::vector<Image> decomposition_weights(const Image& t_bone, const Image& t_tissue,
                                         const MaterialSpectrum& spectrum,
                                         const Image& attenuation);

/// Solves w_i * I_inAtten = weight_i exp(-(mu_b,i t_bone + w mu_t,i t)) for t
/// in every bin. Arguments of the log below epsilon_log are clamped and
/// counted.
TissueReconstruction reconstruct_tissue(const Image& input_attenuation,
                                        const std::vector<Image>& weights, const Image& t_bone,
                                        const MaterialSpectrum& spectrum,
                                        double epsilon_log = 1e-12);

SuppressionResult suppress(const Image& input, const Image& t_bone, const Image& t_tissue,
                           const MaterialSpectrum& spectrum,
                           const SuppressionConfig& config = {});

} // namespace xraycast
