#pragma once

#include <cstdint>
#include <vector>

#include "hybridreg/field.hpp"
#include "hybridreg/guidance.hpp"
#include "hybridreg/raster.hpp"

namespace hybridreg {

struct EdgeMask {
  int width = 0, height = 0;
  std::vector<uint8_t> mask;  // exactly 0 or 1

  uint8_t at(int x, int y) const { return mask[static_cast<size_t>(y) * width + x]; }
};

// Canny with adaptive thresholds: Gaussian blur sigma=1.4, Sobel, NMS along
// the gradient direction, hysteresis at 0.66/1.33 x median gradient magnitude.
EdgeMask canny_adaptive(const GrayImage& img);

void save_edge_mask_png(const EdgeMask& em, const std::string& path);

// Squared windowed correlation between the two images at every pixel,
// w x w windows cropped at the borders, integral-image implementation.
// Flat windows (denominator below 1e-8) yield 0.
GrayImage local_ncc_map(const GrayImage& fixed, const GrayImage& warped, int w = 15);

// Edge-guided NCC: -(sum_p (1+E_m(p)) ncc2(p)) / (sum_p (1+E_m(p))), in [-1,0].
// When d_warped is non-null, accumulates the analytic gradient with respect
// to the warped image.
double encc_loss(const GrayImage& fixed, const GrayImage& warped, const EdgeMask& em,
                 int w = 15, std::vector<double>* d_warped = nullptr);

// The unweighted objective, -mean(ncc2); identical to encc_loss with an
// all-zero mask.
double ncc_loss(const GrayImage& fixed, const GrayImage& warped, int w = 15,
                std::vector<double>* d_warped = nullptr);

// Mean squared forward differences of both displacement planes (x-diffs and
// y-diffs each averaged over their own support).
double smoothness_loss(const DisplacementField& phi, std::vector<double>* d_u = nullptr,
                       std::vector<double>* d_v = nullptr);

struct LossWeights {
  double lambda_p = 5.0;  // position guidance
  double lambda_e = 2.0;  // edge-guided NCC
  double lambda_s = 1.0;  // smoothness
};

struct LossBreakdown {
  double total = 0.0;
  double affinity = 0.0;    // raw term values; total applies the weights
  double position = 0.0;
  double encc = 0.0;
  double smoothness = 0.0;
  bool guidance_empty = false;
};

// Everything derived from the fixed image and the matches that stays
// constant while the field is optimized.
struct GuidanceState {
  EdgeMask edges;
  AffinityMap affinity_gt;
  FeatureGrid fg_fixed;
  GuidancePoints points;
  std::vector<int> affinity_rows;
  int stride = 8;
  int ncc_window = 15;
  // false when no matches exist; affinity and position terms go inactive
  bool guidance_active = true;
};

GuidanceState build_guidance(const GrayImage& fixed, const MatchSet& matches,
                             int stride, int ncc_window, int row_sample,
                             uint64_t seed, int top_k = 120);

// L_total = L_a + lambda_p L_p + lambda_e L_e + lambda_s L_smooth for the
// given state; `warped` must be the moving image already warped by phi.
LossBreakdown total_loss(const GrayImage& fixed, const GrayImage& warped,
                         const DisplacementField& phi, const GuidanceState& gs,
                         const LossWeights& w);

}  // namespace hybridreg
