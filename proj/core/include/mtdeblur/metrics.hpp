#pragma once

#include "mtdeblur/image.hpp"

namespace mtdeblur {

/// 10*log10(peak^2 / MSE) over every channel and pixel. Returns +infinity
/// for identical images.
double psnr(const Image& a, const Image& b, double peak = 1.0);

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5),
/// k1 = 0.01, k2 = 0.03, averaged over channels and valid window
/// positions. Throws DimensionError for images smaller than the window.
double ssim(const Image& a, const Image& b, double peak = 1.0);

/// Mean absolute difference over every value.
double mean_abs_error(const Image& a, const Image& b);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

}  // namespace mtdeblur
