#include "xraycast/image_metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace xraycast {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

void check_pair(const Image& a, const Image& b, double data_range, const char* what)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(what) + ": images differ in size");
    if (!(data_range > 0.0) || !std::isfinite(data_range))
        throw std::invalid_argument(std::string(what) + ": data_range must be > 0");
}

Eigen::VectorXd gaussian_kernel()
{
    Eigen::VectorXd g(kWindow);
    const int half = kWindow / 2;
    for (int i = 0; i < kWindow; ++i)
        g[i] = std::exp(-0.5 * double((i - half) * (i - half)) / (kSigma * kSigma));
    return g / g.sum();
}

// Separable 'valid' filtering with the normalized Gaussian.
Image filter_valid(const Image& in, const Eigen::VectorXd& g)
{
    const Eigen::Index rows = in.rows() - kWindow + 1;
    const Eigen::Index cols = in.cols() - kWindow + 1;
    Image horizontal = Image::Zero(in.rows(), cols);
    for (int t = 0; t < kWindow; ++t)
        horizontal += g[t] * in.middleCols(t, cols);
    Image out = Image::Zero(rows, cols);
    for (int t = 0; t < kWindow; ++t)
        out += g[t] * horizontal.middleRows(t, rows);
    return out;
}

} // namespace

double psnr(const Image& a, const Image& b, double data_range)
{
    check_pair(a, b, data_range, "psnr");
    if (a.size() == 0)
        throw std::invalid_argument("psnr: images are empty");
    const double mse = (a - b).square().mean();
    if (mse == 0.0)
        return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / mse);
}

double ssim(const Image& a, const Image& b, double data_range)
{
    check_pair(a, b, data_range, "ssim");
    if (a.rows() < kWindow || a.cols() < kWindow)
        throw std::invalid_argument("ssim: images must be at least 11x11");

    const double c1 = (kK1 * data_range) * (kK1 * data_range);
    const double c2 = (kK2 * data_range) * (kK2 * data_range);
    const Eigen::VectorXd g = gaussian_kernel();

    const Image mu_a = filter_valid(a, g);
    const Image mu_b = filter_valid(b, g);
    const Image var_a = filter_valid(a * a, g) - mu_a * mu_a;
    const Image var_b = filter_valid(b * b, g) - mu_b * mu_b;
    const Image cov = filter_valid(a * b, g) - mu_a * mu_b;

    const Image map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
                      ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    return map.mean();
}

MetricReport compare_images(const Image& a, const Image& b, double data_range)
{
    return {psnr(a, b, data_range), ssim(a, b, data_range), data_range};
}

} // namespace xraycast
