#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hybridreg/common.hpp"

namespace hybridreg {

// Single-channel raster, row-major, intensities in [0,1].
// Immutable by convention once filled; all operations below are pure.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, double fill = 0.0);
  GrayImage(int width, int height, std::vector<double> data);

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  double at(int x, int y) const { return data_[static_cast<size_t>(y) * width_ + x]; }
  double& at(int x, int y) { return data_[static_cast<size_t>(y) * width_ + x]; }

  // clamp-to-edge lookup
  double at_clamped(int x, int y) const;

  size_t size() const { return data_.size(); }

  // checks finiteness and [0,1]; throws ValidationError
  void validate() const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

struct GradientField {
  int width = 0, height = 0;
  std::vector<double> gx, gy;
};

// Ordered coarsest -> finest; adjacent levels related by integer factor.
struct Pyramid {
  std::vector<GrayImage> levels;
  int factor = 2;

  const GrayImage& coarsest() const { return levels.front(); }
  const GrayImage& finest() const { return levels.back(); }
};

// I/O. PNG (8-bit gray or RGB, palette expanded, alpha stripped) and
// binary PGM (P5). RGB converts to luminance 0.299R + 0.587G + 0.114B.
GrayImage load_image(const std::string& path);
void save_png(const GrayImage& img, const std::string& path);
void save_pgm(const GrayImage& img, const std::string& path);

// Bilinear resampling, corner-aligned; output is exactly w x h.
GrayImage resize(const GrayImage& img, int w, int h);

// Bilinear interpolation of the 4 neighbors; coordinates clamp to
// [0, w-1] x [0, h-1].
double sample_bilinear(const GrayImage& img, double x, double y);

// Central differences in the interior, one-sided at the borders.
GradientField gradient(const GrayImage& img);

// Each coarser level is a 2x2 box filter + decimation of the finer one.
Pyramid build_pyramid(const GrayImage& img, int levels);

}  // namespace hybridreg
