#pragma once

#include <string>
#include <vector>

#include "hybridreg/geometry.hpp"
#include "hybridreg/raster.hpp"

namespace hybridreg {

struct PairResult {
  std::string pair_id;
  double rmse_global = 0.0;
  double rmse_final = 0.0;
  bool accepted = false;   // rmse_final < 20, strict
  bool has_metrics = false;  // ground-truth points were available
  std::string category;    // passthrough label, may be empty
  std::string error;       // non-empty when the pair failed
};

struct BatchResult {
  std::vector<PairResult> pairs;
  double accept_rate = 0.0;
  double auc_final = 0.0;
  double auc_global = 0.0;
  double mean_rmse_final = 0.0;
  double mean_rmse_global = 0.0;
  int threshold_max = 25;  // AUC grid 0..threshold_max step 1
};

constexpr double kAcceptRmse = 20.0;

// strict inequality: RMSE 19.999 is accepted, 20.0 is not
inline bool is_accepted(double rmse_final) { return rmse_final < kAcceptRmse; }

// sqrt(mean squared Euclidean distance) between paired points
double rmse(const std::vector<Point2>& points_a, const std::vector<Point2>& points_b);

// Mean over t in {0,1,...,t_max} of the fraction of pairs with RMSE <= t.
double auc(const std::vector<double>& rmse_list, int t_max = 25);

// Alternating tiles from the two images, fixed first.
GrayImage render_checkerboard(const GrayImage& fixed, const GrayImage& warped, int tile);

BatchResult summarize_batch(std::vector<PairResult> pairs, int t_max = 25);

void write_batch_json(const BatchResult& batch, const std::string& path);
void write_batch_csv(const BatchResult& batch, const std::string& path);

}  // namespace hybridreg
