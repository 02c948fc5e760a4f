#pragma once

#include <cmath>
#include <vector>

#include "hybridreg/raster.hpp"

namespace hybridreg::detail {

// separable Gaussian, radius = ceil(3*sigma), normalized
inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

// clamp-to-edge separable convolution
inline std::vector<double> blur_separable(const std::vector<double>& src, int w, int h,
                                          const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  std::vector<double> tmp(src.size()), out(src.size());
  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * src[static_cast<size_t>(y) * w + clampi(x + i, 0, w - 1)];
      tmp[static_cast<size_t>(y) * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * tmp[static_cast<size_t>(clampi(y + i, 0, h - 1)) * w + x];
      out[static_cast<size_t>(y) * w + x] = acc;
    }
  return out;
}

// 3x3 Sobel with clamp-to-edge borders
inline void sobel(const GrayImage& img, std::vector<double>& gx, std::vector<double>& gy) {
  const int w = img.width(), h = img.height();
  gx.resize(img.size());
  gy.resize(img.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto p = [&](int dx, int dy) { return img.at_clamped(x + dx, y + dy); };
      gx[static_cast<size_t>(y) * w + x] =
          (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
      gy[static_cast<size_t>(y) * w + x] =
          (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
    }
}

}  // namespace hybridreg::detail
