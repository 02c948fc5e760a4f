#pragma once

#include <cstdint>
#include <vector>

#include "hybridreg/field.hpp"
#include "hybridreg/geometry.hpp"
#include "hybridreg/raster.hpp"

namespace hybridreg {

struct AffineParams {
  double rot_deg = 0.0;
  double tx = 0.0;  // px
  double ty = 0.0;  // px
  double scale = 1.0;

  // rotation/scale about the image center, then translation
  Point2 apply(Point2 p, double cx, double cy) const;
  Point2 apply_inverse(Point2 p, double cx, double cy) const;
};

struct SynthConfig {
  double max_rot_deg = 15.0;
  double max_trans_frac = 0.05;  // of width
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  double elastic_intensity = 50.0;  // peak displacement in px at 768 scale
  double elastic_sigma = 6.0;
  double noise_sigma = 0.02;
  int control_points = 20;          // target count, >= 10 required
  double control_min_dist = 32.0;   // px between control points
};

struct SynthPair {
  GrayImage fixed;
  GrayImage moving;
  DisplacementField gt_field;  // fixed -> moving, pull convention
  std::vector<Point2> cp_fixed;
  std::vector<Point2> cp_moving;
  uint64_t seed = 0;
  AffineParams affine;
  double elastic_intensity_used = 0.0;
  int elastic_attempts = 0;
};

// Uniform affine parameters, deterministic per seed.
AffineParams sample_affine(uint64_t seed, double max_rot_deg, double max_trans_frac,
                           double scale_lo, double scale_hi, int width);

// Uniform per-pixel noise in [-1,1]^2 smoothed by a Gaussian of the given
// sigma, scaled so the peak displacement magnitude is intensity * (w/768).
// Rejection-resampled until folding-free; after 10 attempts the intensity
// halves. Reports the accepted intensity and attempt count when asked.
DisplacementField sample_elastic(uint64_t seed, double intensity, double sigma, int w,
                                 int h, double* used_intensity = nullptr,
                                 int* attempts = nullptr);

// fixed = src (+noise); moving = src pulled through the inverse composite
// map; gt_field is the exact composite displacement phi(p) = A(p)+e(A(p))-p
// on the fixed grid, so warp_field(moving, gt_field) reconstructs fixed.
SynthPair make_pair(const GrayImage& src, uint64_t seed, const SynthConfig& cfg);

}  // namespace hybridreg
