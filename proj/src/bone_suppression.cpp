#include "xraycast/bone_suppression.hpp"

#include <cmath>
#include <stdexcept>

namespace xraycast {

namespace {

void check_same_size(const Image& a, const Image& b, const char* what)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(what) + ": maps differ in size");
}

} // namespace

void SuppressionConfig::validate() const
{
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument("suppression: alpha must lie in [0, 1]");
    if (!(epsilon_log > 0.0) || !std::isfinite(epsilon_log))
        throw std::invalid_argument("suppression: epsilon_log must be > 0");
}

Image normalize_to_attenuation(const Image& input, const Image& attenuation_reference)
{
    check_same_size(input, attenuation_reference, "normalize_to_attenuation");
    if (input.size() == 0 || !input.allFinite())
        throw std::invalid_argument("normalize_to_attenuation: input must be finite and non-empty");
    const double peak = input.maxCoeff();
    if (!(peak > 0.0))
        throw DegenerateInputError("normalize_to_attenuation: input maximum must be > 0");

    const double ref_max = attenuation_reference.maxCoeff();
    const double ref_min = attenuation_reference.minCoeff();
    const Image unit = (peak - input) / peak;
    return unit * (ref_max - ref_min) + ref_min;
}

std::vector<Image> decomposition_weights(const Image& t_bone, const Image& t_tissue,
                                         const MaterialSpectrum& spectrum,
                                         const Image& attenuation)
{
    spectrum.validate();
    check_same_size(t_bone, t_tissue, "decomposition_weights");
    check_same_size(t_bone, attenuation, "decomposition_weights");
    if (!(attenuation > 0.0).all())
        throw std::invalid_argument("decomposition_weights: attenuation must be > 0");

    std::vector<Image> weights;
    weights.reserve(spectrum.bins.size());
    for (std::size_t i = 0; i < spectrum.bins.size(); ++i) {
        const double mb = spectrum.bins[i].mu_bone_per_mm;
        const double mt = spectrum.effective_mu_tissue(i);
        weights.push_back(spectrum.bins[i].weight * (-(mb * t_bone + mt * t_tissue)).exp() /
                          attenuation);
    }
    return weights;
}

TissueReconstruction reconstruct_tissue(const Image& input_attenuation,
                                        const std::vector<Image>& weights, const Image& t_bone,
                                        const MaterialSpectrum& spectrum, double epsilon_log)
{
    spectrum.validate();
    if (weights.size() != spectrum.bins.size())
        throw std::invalid_argument("reconstruct_tissue: one weight map per energy bin required");
    if (!(epsilon_log > 0.0))
        throw std::invalid_argument("reconstruct_tissue: epsilon_log must be > 0");
    check_same_size(input_attenuation, t_bone, "reconstruct_tissue");

    // The exponent equation is solved directly:
    //   w_i I = weight_i exp(-(mu_b t_bone + w mu_t t))
    //   t = (-log(w_i I / weight_i) - mu_b t_bone) / (w mu_t)
    // Reassembling with the original coefficients then reproduces I exactly.
    TissueReconstruction out;
    out.per_bin.reserve(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        check_same_size(weights[i], t_bone, "reconstruct_tissue");
        const double mb = spectrum.bins[i].mu_bone_per_mm;
        const double mt = spectrum.effective_mu_tissue(i);
        Image arg = weights[i] * input_attenuation / spectrum.bins[i].weight;
        for (Eigen::Index p = 0; p < arg.size(); ++p) {
            if (!(arg.data()[p] >= epsilon_log)) {
                arg.data()[p] = epsilon_log;
                ++out.clamp_count;
            }
        }
        out.per_bin.push_back((-arg.log() - mb * t_bone) / mt);
    }
    return out;
}

SuppressionResult suppress(const Image& input, const Image& t_bone, const Image& t_tissue,
                           const MaterialSpectrum& spectrum, const SuppressionConfig& config)
{
    config.validate();
    check_same_size(input, t_bone, "suppress");
    check_same_size(input, t_tissue, "suppress");

    const Image reference = attenuate(t_bone, t_tissue, spectrum);
    SuppressionResult result;
    result.alpha = config.alpha;
    result.input_attenuation = normalize_to_attenuation(input, reference);
    const Image& in_atten = result.input_attenuation;

    const auto weights = decomposition_weights(t_bone, t_tissue, spectrum, reference);
    TissueReconstruction recon =
        reconstruct_tissue(in_atten, weights, t_bone, spectrum, config.epsilon_log);
    result.clamp_count = recon.clamp_count;

    // The suppressed attenuation is written as the input plus the change
    // caused by swapping the bone coefficient, so alpha = 1 returns the
    // input bit for bit.
    Image reassembled = Image::Zero(input.rows(), input.cols());
    Image suppressed = in_atten;
    for (std::size_t i = 0; i < spectrum.bins.size(); ++i) {
        const double weight = spectrum.bins[i].weight;
        const double mb = spectrum.bins[i].mu_bone_per_mm;
        const double mt = spectrum.effective_mu_tissue(i);
        const double mu_eff = config.alpha * mb + (1.0 - config.alpha) * mt;
        const Image& t = recon.per_bin[i];
        const Image original = weight * (-(mb * t_bone + mt * t)).exp();
        const Image replaced = weight * (-(mu_eff * t_bone + mt * t)).exp();
        reassembled += original;
        suppressed += replaced - original;
    }
    result.reconstruction_residual = ((reassembled - in_atten).abs() / in_atten).maxCoeff();
    result.suppressed = invert_for_display(std::move(suppressed));
    result.t_recon_tissue = std::move(recon.per_bin);
    return result;
}

} // namespace xraycast
