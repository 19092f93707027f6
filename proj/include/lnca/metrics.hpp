#pragma once

#include <vector>

#include "lnca/image.hpp"

namespace lnca::inline LNCA_PRECISION {

struct SSIMConfig {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
    double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

struct SSIMResult {
    std::vector<double> per_image;
    double mean = 0;
};

/// Mean SSIM map (valid Gaussian windows, averaged over space and channels).
/// Computed in double precision.
SSIMResult ssim(const ImageBatch& x, const ImageBatch& y, const SSIMConfig& config = {});

/// Normalised 1-D Gaussian taps.
std::vector<double> gaussian_window(int size, double sigma);

struct ErrorMetrics {
    double mse = 0;
    double psnr = 0;  // +infinity when mse == 0
};

/// Per-image MSE and PSNR for dynamic range `peak`.
std::vector<ErrorMetrics> psnr_mse(const ImageBatch& x, const ImageBatch& y, double peak = 1.0);

}  // namespace lnca
