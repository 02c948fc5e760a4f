#include "hybridreg/raster.hpp"

#include <algorithm>
#include <cmath>

namespace hybridreg {

GrayImage::GrayImage(int width, int height, double fill)
    : width_(width), height_(height) {
  if (width < 1 || height < 1)
    throw ArgumentError("GrayImage: dimensions must be >= 1");
  data_.assign(static_cast<size_t>(width) * height, fill);
}

GrayImage::GrayImage(int width, int height, std::vector<double> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (width < 1 || height < 1)
    throw ArgumentError("GrayImage: dimensions must be >= 1");
  if (data_.size() != static_cast<size_t>(width) * height)
    throw ArgumentError("GrayImage: data length != width*height");
}

double GrayImage::at_clamped(int x, int y) const {
  x = std::clamp(x, 0, width_ - 1);
  y = std::clamp(y, 0, height_ - 1);
  return at(x, y);
}

void GrayImage::validate() const {
  for (double v : data_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw ValidationError("GrayImage: value outside [0,1]");
  }
}

double sample_bilinear(const GrayImage& img, double x, double y) {
  const int w = img.width(), h = img.height();
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  if (x0 > w - 2) x0 = std::max(0, w - 2);
  if (y0 > h - 2) y0 = std::max(0, h - 2);
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  const double fx = x - x0, fy = y - y0;
  const double top = (1.0 - fx) * img.at(x0, y0) + fx * img.at(x1, y0);
  const double bot = (1.0 - fx) * img.at(x0, y1) + fx * img.at(x1, y1);
  return (1.0 - fy) * top + fy * bot;
}

GrayImage resize(const GrayImage& img, int w, int h) {
  if (w < 1 || h < 1) throw ArgumentError("resize: zero dimension");
  if (w == img.width() && h == img.height()) return img;
  GrayImage out(w, h);
  const double sx = (w > 1) ? static_cast<double>(img.width() - 1) / (w - 1) : 0.0;
  const double sy = (h > 1) ? static_cast<double>(img.height() - 1) / (h - 1) : 0.0;
  const double cx = 0.5 * (img.width() - 1);
  const double cy = 0.5 * (img.height() - 1);
  for (int y = 0; y < h; ++y) {
    const double srcy = (h > 1) ? y * sy : cy;
    for (int x = 0; x < w; ++x) {
      const double srcx = (w > 1) ? x * sx : cx;
      out.at(x, y) = sample_bilinear(img, srcx, srcy);
    }
  }
  return out;
}

GradientField gradient(const GrayImage& img) {
  const int w = img.width(), h = img.height();
  if (w < 2 || h < 2) throw ArgumentError("gradient: image must be >= 2x2");
  GradientField g;
  g.width = w;
  g.height = h;
  g.gx.resize(img.size());
  g.gy.resize(img.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      if (x == 0)
        g.gx[i] = img.at(1, y) - img.at(0, y);
      else if (x == w - 1)
        g.gx[i] = img.at(w - 1, y) - img.at(w - 2, y);
      else
        g.gx[i] = 0.5 * (img.at(x + 1, y) - img.at(x - 1, y));
      if (y == 0)
        g.gy[i] = img.at(x, 1) - img.at(x, 0);
      else if (y == h - 1)
        g.gy[i] = img.at(x, h - 1) - img.at(x, h - 2);
      else
        g.gy[i] = 0.5 * (img.at(x, y + 1) - img.at(x, y - 1));
    }
  }
  return g;
}

Pyramid build_pyramid(const GrayImage& img, int levels) {
  if (levels < 1) throw ArgumentError("build_pyramid: levels must be >= 1");
  std::vector<GrayImage> fine_to_coarse;
  fine_to_coarse.push_back(img);
  for (int l = 1; l < levels; ++l) {
    const GrayImage& prev = fine_to_coarse.back();
    const int w = prev.width() / 2, h = prev.height() / 2;
    if (w < 8 || h < 8)
      throw ArgumentError("build_pyramid: coarsest level would be under 8x8");
    GrayImage next(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        next.at(x, y) = 0.25 * (prev.at(2 * x, 2 * y) + prev.at(2 * x + 1, 2 * y) +
                                prev.at(2 * x, 2 * y + 1) + prev.at(2 * x + 1, 2 * y + 1));
    fine_to_coarse.push_back(std::move(next));
  }
  Pyramid pyr;
  pyr.factor = 2;
  pyr.levels.assign(fine_to_coarse.rbegin(), fine_to_coarse.rend());
  return pyr;
}

}  // namespace hybridreg
