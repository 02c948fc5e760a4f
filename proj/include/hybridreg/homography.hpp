#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hybridreg/matching.hpp"
#include "hybridreg/raster.hpp"

namespace hybridreg {

// 3x3 projective transform, normalized so m[2][2] = 1. Maps moving-image
// coordinates into the fixed frame.
struct Homography {
  std::array<std::array<double, 3>, 3> m{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};

  Point2 apply(Point2 p) const {
    const double w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
    return {(m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w};
  }

  Homography inverse() const;

  static Homography identity() { return Homography{}; }
};

struct RansacResult {
  Homography h;
  std::vector<bool> inlier_mask;
  int inlier_count = 0;
  int iterations_used = 0;
};

struct RansacParams {
  double reproj_thresh = 3.0;  // px, symmetric transfer error
  int max_iters = 2000;
  double confidence = 0.999;
  uint64_t seed = 0;
};

// Normalized DLT (Hartley): translate to centroid, scale to mean distance
// sqrt(2), least-squares via SVD, denormalize, scale to m[2][2]=1.
Homography dlt(const std::vector<MatchPair>& pairs);

RansacResult ransac_homography(const MatchSet& matches, const RansacParams& params);

// Inverse warping: out(p) = sample_bilinear(img, h^-1 * p).
GrayImage warp_homography(const GrayImage& img, const Homography& h);

}  // namespace hybridreg
