#include "hybridreg/optim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "hybridreg/parallel.hpp"

namespace hybridreg {

std::vector<int> OptimConfig::resolved_iters() const {
  if (!iters_per_level.empty()) {
    if (static_cast<int>(iters_per_level.size()) != levels)
      throw ArgumentError("OptimConfig: iters_per_level length != levels");
    for (int it : iters_per_level)
      if (it < 1) throw ArgumentError("OptimConfig: iterations must be >= 1");
    return iters_per_level;
  }
  std::vector<int> out(levels);
  for (int l = 0; l < levels; ++l) {
    // finest gets 100, +50 per coarser level, capped at 200
    out[l] = std::min(200, 100 + 50 * (levels - 1 - l));
  }
  return out;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads,
               AdamState& state, double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ArgumentError("adam_step: shape mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    if (!std::isfinite(g))
      throw DivergenceError("gradient", "adam_step: non-finite gradient");
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

namespace {

void check_finite(double value, const char* term) {
  if (!std::isfinite(value))
    throw DivergenceError(term, std::string("register_deformable: non-finite ") + term +
                                    " loss");
}

const char* find_nonfinite_term(const std::vector<double>& da, const std::vector<double>& de,
                                const std::vector<double>& du, const std::vector<double>& dv) {
  for (double v : da)
    if (!std::isfinite(v)) return "affinity";
  for (double v : de)
    if (!std::isfinite(v)) return "encc";
  for (double v : du)
    if (!std::isfinite(v)) return "field";
  for (double v : dv)
    if (!std::isfinite(v)) return "field";
  return "gradient";
}

// Loss and gradient for one pyramid level. The value path is the same code
// total_loss uses (same term functions, same order), so traced losses and
// the public surface agree bitwise.
class LevelEvaluator {
 public:
  LevelEvaluator(const GrayImage& fixed, const GrayImage& moving, GuidanceState gs,
                 LossWeights w)
      : fixed_(fixed), moving_(moving), gs_(std::move(gs)), w_(w),
        warped_(fixed.width(), fixed.height()),
        dwx_(fixed.size(), 0.0), dwy_(fixed.size(), 0.0),
        da_(fixed.size(), 0.0), de_(fixed.size(), 0.0),
        tmp_u_(fixed.size(), 0.0), tmp_v_(fixed.size(), 0.0) {}

  LossBreakdown eval(const DisplacementField& phi, std::vector<double>* grad_u,
                     std::vector<double>* grad_v) {
    LossBreakdown b;
    b.guidance_empty = gs_.points.empty();
    const size_t n = fixed_.size();

    warp_field_with_grad(moving_, phi, warped_, dwx_, dwy_);

    if (grad_u) {
      std::fill(da_.begin(), da_.end(), 0.0);
      std::fill(de_.begin(), de_.end(), 0.0);
    }

    if (gs_.guidance_active) {
      const FeatureGrid fg_warped = build_feature_grid(warped_, gs_.stride);
      b.affinity = affinity_loss(fg_warped, gs_.fg_fixed, gs_.affinity_gt,
                                 gs_.affinity_rows, fixed_.width(), fixed_.height(),
                                 gs_.stride, grad_u ? &da_ : nullptr);
      check_finite(b.affinity, "affinity");
    }
    b.encc = encc_loss(fixed_, warped_, gs_.edges, gs_.ncc_window, grad_u ? &de_ : nullptr);
    check_finite(b.encc, "encc");

    if (grad_u) {
      std::fill(tmp_u_.begin(), tmp_u_.end(), 0.0);
      std::fill(tmp_v_.begin(), tmp_v_.end(), 0.0);
    }
    if (gs_.guidance_active) {
      b.position = position_loss(gs_.points, phi, grad_u ? &tmp_u_ : nullptr,
                                 grad_u ? &tmp_v_ : nullptr);
      check_finite(b.position, "position");
    }

    if (grad_u) {
      // chain image-space gradients through the warp, add position term
      parallel_blocks(static_cast<int>(n), 1 << 14, [&](int, int i0, int i1) {
        for (int i = i0; i < i1; ++i) {
          const double dimg = da_[i] + w_.lambda_e * de_[i];
          (*grad_u)[i] = dimg * dwx_[i] + w_.lambda_p * tmp_u_[i];
          (*grad_v)[i] = dimg * dwy_[i] + w_.lambda_p * tmp_v_[i];
        }
      });
      std::fill(tmp_u_.begin(), tmp_u_.end(), 0.0);
      std::fill(tmp_v_.begin(), tmp_v_.end(), 0.0);
      b.smoothness = smoothness_loss(phi, &tmp_u_, &tmp_v_);
      check_finite(b.smoothness, "smoothness");
      for (size_t i = 0; i < n; ++i) {
        (*grad_u)[i] += w_.lambda_s * tmp_u_[i];
        (*grad_v)[i] += w_.lambda_s * tmp_v_[i];
        if (!std::isfinite((*grad_u)[i]) || !std::isfinite((*grad_v)[i]))
          throw DivergenceError(find_nonfinite_term(da_, de_, tmp_u_, tmp_v_),
                                "register_deformable: non-finite gradient");
      }
    } else {
      b.smoothness = smoothness_loss(phi);
      check_finite(b.smoothness, "smoothness");
    }

    b.total = b.affinity + w_.lambda_p * b.position + w_.lambda_e * b.encc +
              w_.lambda_s * b.smoothness;
    return b;
  }

  const GrayImage& warped() const { return warped_; }

 private:
  const GrayImage& fixed_;
  const GrayImage& moving_;
  GuidanceState gs_;
  LossWeights w_;
  GrayImage warped_;
  std::vector<double> dwx_, dwy_, da_, de_, tmp_u_, tmp_v_;
};

MatchSet scale_matches(const MatchSet& matches, double sx, double sy) {
  MatchSet out;
  out.source = matches.source;
  out.pairs.reserve(matches.size());
  for (const MatchPair& p : matches.pairs)
    out.pairs.push_back({{p.moving.x * sx, p.moving.y * sy},
                         {p.fixed.x * sx, p.fixed.y * sy}});
  return out;
}

}  // namespace

LossBreakdown eval_total_loss_grad(const GrayImage& fixed, const GrayImage& moving,
                                   const DisplacementField& phi, const GuidanceState& gs,
                                   const LossWeights& w, std::vector<double>& grad_u,
                                   std::vector<double>& grad_v) {
  LevelEvaluator evaluator(fixed, moving, gs, w);
  grad_u.assign(fixed.size(), 0.0);
  grad_v.assign(fixed.size(), 0.0);
  return evaluator.eval(phi, &grad_u, &grad_v);
}

std::pair<DisplacementField, OptimTrace> register_deformable(const GrayImage& fixed,
                                                             const GrayImage& moving_global,
                                                             const MatchSet& matches,
                                                             const OptimConfig& cfg) {
  if (fixed.width() != moving_global.width() || fixed.height() != moving_global.height())
    throw ArgumentError("register_deformable: image dimension mismatch");
  if (cfg.levels < 1) throw ArgumentError("register_deformable: levels must be >= 1");
  if (cfg.step_size <= 0.0) throw ArgumentError("register_deformable: step_size must be > 0");

  const std::vector<int> iters = cfg.resolved_iters();
  const Pyramid pyr_f = build_pyramid(fixed, cfg.levels);
  const Pyramid pyr_m = build_pyramid(moving_global, cfg.levels);

  OptimTrace trace;
  trace.guidance_empty = matches.empty();

  DisplacementField phi(pyr_f.coarsest().width(), pyr_f.coarsest().height());
  LossBreakdown last_breakdown;

  for (int level = 0; level < cfg.levels; ++level) {
    const auto t_start = std::chrono::steady_clock::now();
    const GrayImage& lf = pyr_f.levels[level];
    const GrayImage& lm = pyr_m.levels[level];

    if (phi.width != lf.width() || phi.height != lf.height())
      phi = resample_field(phi, lf.width(), lf.height());

    const double sx = static_cast<double>(lf.width()) / fixed.width();
    const double sy = static_cast<double>(lf.height()) / fixed.height();
    const MatchSet level_matches = scale_matches(matches, sx, sy);
    GuidanceState gs = build_guidance(lf, level_matches, cfg.stride, cfg.ncc_window,
                                      cfg.affinity_row_sample,
                                      cfg.seed ^ (0x9e3779b97f4a7c15ULL * (level + 1)),
                                      cfg.guidance_top_k);
    LevelEvaluator evaluator(lf, lm, std::move(gs), cfg.weights);

    const double lr = cfg.step_size / static_cast<double>(1 << level);
    AdamState state_u(phi.size()), state_v(phi.size());
    std::vector<double> grad_u(phi.size()), grad_v(phi.size());

    DisplacementField best_phi = phi;
    double best_loss = std::numeric_limits<double>::infinity();
    double initial_loss = 0.0;

    for (int it = 0; it < iters[level]; ++it) {
      const LossBreakdown b = evaluator.eval(phi, &grad_u, &grad_v);
      if (it == 0) initial_loss = b.total;
      if (b.total < best_loss) {
        best_loss = b.total;
        best_phi = phi;
      }
      trace.iterations.push_back({level, it, b});
      adam_step(phi.u, grad_u, state_u, lr, cfg.beta1, cfg.beta2, cfg.eps);
      adam_step(phi.v, grad_v, state_v, lr, cfg.beta1, cfg.beta2, cfg.eps);
    }

    // evaluate the post-step field, then keep the best iterate of the level
    LossBreakdown final_b = evaluator.eval(phi, nullptr, nullptr);
    if (final_b.total < best_loss) {
      best_loss = final_b.total;
      best_phi = phi;
    } else {
      phi = best_phi;
      final_b = evaluator.eval(phi, nullptr, nullptr);
    }
    last_breakdown = final_b;

    const auto t_end = std::chrono::steady_clock::now();
    LevelRecord rec;
    rec.width = lf.width();
    rec.height = lf.height();
    rec.iters = iters[level];
    rec.initial_loss = initial_loss;
    rec.final_loss = final_b.total;
    rec.wall_ms = std::chrono::duration<double, std::milli>(t_end - t_start).count();
    trace.levels.push_back(rec);
  }

  trace.final_breakdown = last_breakdown;
  return {std::move(phi), std::move(trace)};
}

}  // namespace hybridreg
