#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "hybridreg/edgeloss.hpp"
#include "hybridreg/field.hpp"
#include "hybridreg/matching.hpp"
#include "hybridreg/raster.hpp"

namespace hybridreg {

struct OptimConfig {
  int levels = 3;
  // coarse -> fine; empty means the default schedule (100 at the finest
  // level, +50 per coarser level, capped at 200)
  std::vector<int> iters_per_level;
  double step_size = 0.5;  // Adam lr at the coarsest level, halved per level
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  LossWeights weights;
  uint64_t seed = 0;
  int affinity_row_sample = 1024;
  int stride = 8;
  int ncc_window = 15;
  int guidance_top_k = 120;

  std::vector<int> resolved_iters() const;
};

struct IterRecord {
  int level = 0;
  int iter = 0;
  LossBreakdown loss;
};

struct LevelRecord {
  int width = 0, height = 0;
  int iters = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double wall_ms = 0.0;
};

struct OptimTrace {
  std::vector<IterRecord> iterations;
  std::vector<LevelRecord> levels;
  LossBreakdown final_breakdown;
  bool guidance_empty = false;
};

struct AdamState {
  std::vector<double> m, v;
  long t = 0;

  explicit AdamState(size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// One bias-corrected Adam update. Throws DivergenceError on non-finite
// gradients.
void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

// Loss and analytic gradient of the composite objective at phi, for one
// (fixed, moving, guidance) instance. This is the evaluation the optimizer
// iterates; its value path matches total_loss(fixed, warp_field(moving,
// phi), phi, gs, w) bitwise.
LossBreakdown eval_total_loss_grad(const GrayImage& fixed, const GrayImage& moving,
                                   const DisplacementField& phi, const GuidanceState& gs,
                                   const LossWeights& w, std::vector<double>& grad_u,
                                   std::vector<double>& grad_v);

// Minimizes the composite objective over a dense displacement field with
// Adam, coarse-to-fine. `matches` must already live in the globally
// registered frame. Empty matches deactivate the guidance terms.
std::pair<DisplacementField, OptimTrace> register_deformable(
    const GrayImage& fixed, const GrayImage& moving_global, const MatchSet& matches,
    const OptimConfig& cfg);

}  // namespace hybridreg
