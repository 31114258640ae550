#pragma once

#include "xraycast/types.hpp"

namespace xraycast {

struct MetricReport {
    double psnr_db = 0.0; // +infinity for identical images
    double ssim = 0.0;
    double data_range = 1.0;
};

/// 10 log10(range^2 / MSE); +infinity when MSE is 0.
double psnr(const Image& a, const Image& b, double data_range);

/// Mean SSIM over all fully covered 11x11 Gaussian windows (sigma 1.5,
/// k1 = 0.01, k2 = 0.03). Both images must be at least 11x11.
double ssim(const Image& a, const Image& b, double data_range);

MetricReport compare_images(const Image& a, const Image& b, double data_range);

} // namespace xraycast
