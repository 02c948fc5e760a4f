#pragma once

#include <string>
#include <vector>

#include "hybridreg/geometry.hpp"
#include "hybridreg/raster.hpp"

namespace hybridreg {

// Dense per-pixel displacement, defined on the fixed-image grid under the
// pull convention: a warped image samples the source at p + phi(p), and
// point transfer maps fixed-frame coordinates into the moving frame.
struct DisplacementField {
  int width = 0, height = 0;
  std::vector<double> u, v;  // x and y displacement planes, row-major

  DisplacementField() = default;
  DisplacementField(int w, int h)
      : width(w), height(h),
        u(static_cast<size_t>(w) * h, 0.0),
        v(static_cast<size_t>(w) * h, 0.0) {}

  size_t size() const { return u.size(); }
  size_t idx(int x, int y) const { return static_cast<size_t>(y) * width + x; }

  // bilinear interpolation of (u,v) at a subpixel position, clamped
  Point2 displacement_at(double x, double y) const;
};

struct JacobianStats {
  double min_det = 1.0;
  double folding_fraction = 0.0;
};

// out(p) = sample_bilinear(img, p + phi(p))
GrayImage warp_field(const GrayImage& img, const DisplacementField& phi);

// Same warp plus the spatial derivative of each sample w.r.t. its sample
// coordinates (the chain factor d out / d phi). Sub-gradients at exact
// integer crossings come from the left cell; clamped coordinates get 0.
// The sampled values match warp_field bitwise.
void warp_field_with_grad(const GrayImage& img, const DisplacementField& phi,
                          GrayImage& out, std::vector<double>& dout_du,
                          std::vector<double>& dout_dv);

// p -> p + phi~(p); maps fixed-frame points into the moving frame
std::vector<Point2> warp_points(const std::vector<Point2>& points,
                                const DisplacementField& phi);

// Bilinear upsampling of both planes to (2w, 2h); values doubled so
// displacements stay in pixels of the new resolution.
DisplacementField upsample_field(const DisplacementField& phi, int factor = 2);

// General resampling used between pyramid levels with non-even dimensions;
// displacement values scale by the per-axis size ratio.
DisplacementField resample_field(const DisplacementField& phi, int w, int h);

// Determinant of d(p + phi)/dp by central differences, interior pixels.
JacobianStats jacobian_stats(const DisplacementField& phi);

// Binary container: magic "HRFD", u32 width, u32 height, f32 u-plane,
// f32 v-plane, little-endian.
void save_field(const DisplacementField& phi, const std::string& path);
DisplacementField load_field(const std::string& path);

}  // namespace hybridreg
