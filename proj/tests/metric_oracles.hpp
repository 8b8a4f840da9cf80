#pragma once

#include <cmath>

#include "mtdeblur/image.hpp"

namespace metric_oracles {

using mtdeblur::Image;

// Direct evaluation: 2D Gaussian weights built from the closed form and
// applied at every valid window position, without separability.
inline double ssim_direct(const Image& a, const Image& b) {
  constexpr int win = 11;
  constexpr double sigma = 1.5;
  double weights[win][win];
  double total = 0.0;
  for (int i = 0; i < win; ++i) {
    for (int j = 0; j < win; ++j) {
      const double di = i - 5, dj = j - 5;
      weights[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      total += weights[i][j];
    }
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double sum = 0.0;
  int count = 0;
  for (int c = 0; c < a.channels(); ++c) {
    for (int y = 0; y + win <= a.height(); ++y) {
      for (int x = 0; x + win <= a.width(); ++x) {
        double mx = 0, my = 0;
        for (int i = 0; i < win; ++i) {
          for (int j = 0; j < win; ++j) {
            const double wgt = weights[i][j] / total;
            mx += wgt * a.at(c, y + i, x + j);
            my += wgt * b.at(c, y + i, x + j);
          }
        }
        double vx = 0, vy = 0, cov = 0;
        for (int i = 0; i < win; ++i) {
          for (int j = 0; j < win; ++j) {
            const double wgt = weights[i][j] / total;
            const double dx = a.at(c, y + i, x + j) - mx;
            const double dy = b.at(c, y + i, x + j) - my;
            vx += wgt * dx * dx;
            vy += wgt * dy * dy;
            cov += wgt * dx * dy;
          }
        }
        sum += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
    }
  }
  return sum / count;
}

inline double psnr_direct(const Image& a, const Image& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a.data()[i]) - b.data()[i];
    s += d * d;
  }
  return static_cast<double>(10.0L * std::log10(1.0L / (s / a.size())));
}

}  // namespace metric_oracles
