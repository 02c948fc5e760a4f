#pragma once

#include <cstdint>
#include <vector>

#include "hybridreg/field.hpp"
#include "hybridreg/matching.hpp"
#include "hybridreg/raster.hpp"

namespace hybridreg {

// Ground-truth affinity between stride-downsampled cells of the moving and
// fixed images. Conceptually a (grid_w*grid_h)^2 matrix in [0,1]:
//   1                      where cell i matches cell j,
//   max(0, 1 - d1(j, m))   where cell i matches fixed cell m,
//   max(0, 1 - d1(n, i))   where moving cell n matches cell j,
//   0                      otherwise, maximum wins on overlaps,
// with d1 the Manhattan distance normalized by (W'-1)+(H'-1). Stored
// implicitly via the match tables; entries evaluate in O(matches per cell).
struct AffinityMap {
  int grid_w = 0, grid_h = 0;
  std::vector<std::vector<int>> targets_of_moving;  // fixed cells matched by moving cell
  std::vector<std::vector<int>> sources_of_fixed;   // moving cells matching fixed cell
  std::vector<int> matched_moving_cells;            // ascending
  std::vector<int> matched_fixed_cells;             // ascending

  int cells() const { return grid_w * grid_h; }
  double value(int i, int j) const;
  void fill_row(int i, double* out) const;  // out has cells() entries
  std::vector<std::vector<double>> dense() const;
};

AffinityMap build_affinity_gt(const MatchSet& matches, int image_w, int image_h,
                              int stride = 8);

// Hand-crafted per-cell descriptors: zero-mean unit-norm flattening of each
// stride x stride patch; flat patches (variance < 1e-8) get the zero vector.
struct FeatureGrid {
  int grid_w = 0, grid_h = 0, dim = 0;
  std::vector<double> desc;      // cell-major, dim values per cell
  std::vector<double> inv_norm;  // 1/||centered patch||, 0 for flat cells

  const double* cell(int i) const { return desc.data() + static_cast<size_t>(i) * dim; }
};

FeatureGrid build_feature_grid(const GrayImage& img, int stride = 8);

// Rows of the predicted affinity evaluated against the ground truth:
// all matched moving rows plus row_sample seeded rows; every row when the
// grid is at most 32x32.
std::vector<int> select_affinity_rows(const AffinityMap& gt, int row_sample,
                                      uint64_t seed);

// MSE between clamp(F_m F_f^T, 0, 1) and the ground truth over the selected
// rows. When d_image is non-null, accumulates the gradient with respect to
// the warped moving image (dimensions image_w x image_h, stride cells).
double affinity_loss(const FeatureGrid& fg_warped_moving, const FeatureGrid& fg_fixed,
                     const AffinityMap& gt, const std::vector<int>& rows,
                     int image_w, int image_h, int stride = 8,
                     std::vector<double>* d_image = nullptr);

// convenience overload doing its own row selection
double affinity_loss(const FeatureGrid& fg_warped_moving, const FeatureGrid& fg_fixed,
                     const AffinityMap& gt, int row_sample, uint64_t seed = 0);

// Matched pairs kept for position guidance, ordered by descending
// |gx|+|gy| of the fixed image at the fixed-side keypoint.
struct GuidancePoints {
  std::vector<Point2> p_m;  // moving-frame (globally registered) positions
  std::vector<Point2> p_f;  // fixed-frame positions

  size_t size() const { return p_f.size(); }
  bool empty() const { return p_f.empty(); }
};

GuidancePoints select_guidance_points(const MatchSet& matches,
                                      const GrayImage& fixed_img, int k = 120);

// Smooth-l1 (beta=1) between field-transferred fixed points and their
// moving counterparts, summed over coordinates, averaged over points.
// When d_field_u/v are non-null, accumulates the gradient.
double position_loss(const GuidancePoints& gp, const DisplacementField& phi,
                     std::vector<double>* d_field_u = nullptr,
                     std::vector<double>* d_field_v = nullptr);

// A_g rendered as a PGM heatmap (dense; intended for small grids)
void dump_affinity_pgm(const AffinityMap& gt, const std::string& path);

}  // namespace hybridreg
