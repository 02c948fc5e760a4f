#include "hybridreg/synth.hpp"

#include <algorithm>
#include <cmath>

#include "filters.hpp"
#include "hybridreg/parallel.hpp"
#include "hybridreg/rng.hpp"

namespace hybridreg {

Point2 AffineParams::apply(Point2 p, double cx, double cy) const {
  const double a = rot_deg * M_PI / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  const double dx = p.x - cx, dy = p.y - cy;
  return {cx + scale * (c * dx - s * dy) + tx, cy + scale * (s * dx + c * dy) + ty};
}

Point2 AffineParams::apply_inverse(Point2 p, double cx, double cy) const {
  const double a = rot_deg * M_PI / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  const double dx = (p.x - tx - cx) / scale, dy = (p.y - ty - cy) / scale;
  return {cx + c * dx + s * dy, cy + -s * dx + c * dy};
}

AffineParams sample_affine(uint64_t seed, double max_rot_deg, double max_trans_frac,
                           double scale_lo, double scale_hi, int width) {
  if (scale_hi < scale_lo || scale_lo <= 0.0)
    throw ArgumentError("sample_affine: invalid scale range");
  Rng rng(seed);
  AffineParams p;
  p.rot_deg = rng.uniform(-max_rot_deg, max_rot_deg);
  p.tx = rng.uniform(-max_trans_frac, max_trans_frac) * width;
  p.ty = rng.uniform(-max_trans_frac, max_trans_frac) * width;
  p.scale = rng.uniform(scale_lo, scale_hi);
  return p;
}

namespace {

DisplacementField draw_elastic(Rng& rng, double peak, double sigma, int w, int h) {
  DisplacementField phi(w, h);
  if (peak <= 0.0) return phi;
  for (size_t i = 0; i < phi.size(); ++i) phi.u[i] = rng.uniform(-1.0, 1.0);
  for (size_t i = 0; i < phi.size(); ++i) phi.v[i] = rng.uniform(-1.0, 1.0);
  const auto kernel = detail::gaussian_kernel(sigma);
  phi.u = detail::blur_separable(phi.u, w, h, kernel);
  phi.v = detail::blur_separable(phi.v, w, h, kernel);
  double max_mag = 0.0;
  for (size_t i = 0; i < phi.size(); ++i)
    max_mag = std::max(max_mag, std::hypot(phi.u[i], phi.v[i]));
  if (max_mag <= 0.0) return phi;
  const double s = peak / max_mag;
  for (size_t i = 0; i < phi.size(); ++i) {
    phi.u[i] *= s;
    phi.v[i] *= s;
  }
  return phi;
}

}  // namespace

DisplacementField sample_elastic(uint64_t seed, double intensity, double sigma, int w,
                                 int h, double* used_intensity, int* attempts_out) {
  if (w < 32 || h < 32) throw ArgumentError("sample_elastic: size must be >= 32x32");
  Rng rng(seed);
  double current = intensity;
  int attempts = 0;
  for (;;) {
    const double peak = current * (static_cast<double>(w) / 768.0);
    DisplacementField phi = draw_elastic(rng, peak, sigma, w, h);
    ++attempts;
    if (jacobian_stats(phi).folding_fraction == 0.0) {
      if (used_intensity) *used_intensity = current;
      if (attempts_out) *attempts_out = attempts;
      return phi;
    }
    if (attempts % 10 == 0) current *= 0.5;
  }
}

SynthPair make_pair(const GrayImage& src, uint64_t seed, const SynthConfig& cfg) {
  const int w = src.width(), h = src.height();
  if (w < 96 || h < 96) throw ArgumentError("make_pair: source image too small");
  if (cfg.control_points < 10)
    throw ArgumentError("make_pair: need at least 10 control points");

  SynthPair pair;
  pair.seed = seed;
  Rng rng(seed);
  pair.affine = sample_affine(rng.next_u64(), cfg.max_rot_deg, cfg.max_trans_frac,
                              cfg.scale_lo, cfg.scale_hi, w);
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);

  // elastic displacement, re-drawn if the composite with the affine folds
  DisplacementField elastic;
  const uint64_t elastic_seed = rng.next_u64();
  for (int round = 0;; ++round) {
    int attempts = 0;
    elastic = sample_elastic(elastic_seed + round, cfg.elastic_intensity,
                             cfg.elastic_sigma, w, h, &pair.elastic_intensity_used,
                             &attempts);
    pair.elastic_attempts += attempts;

    pair.gt_field = DisplacementField(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const Point2 q = pair.affine.apply({static_cast<double>(x), static_cast<double>(y)},
                                           cx, cy);
        const Point2 e = elastic.displacement_at(q.x, q.y);
        const size_t i = pair.gt_field.idx(x, y);
        pair.gt_field.u[i] = q.x + e.x - x;
        pair.gt_field.v[i] = q.y + e.y - y;
      }
    if (jacobian_stats(pair.gt_field).folding_fraction == 0.0) break;
  }

  // moving(q) = src(A^-1(z)) with z + e(z) = q, solved by fixed point;
  // contraction holds because the accepted elastic field is folding-free
  pair.moving = GrayImage(w, h);
  parallel_blocks(h, 32, [&](int, int y0, int y1) {
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < w; ++x) {
        const Point2 q{static_cast<double>(x), static_cast<double>(y)};
        Point2 z = q;
        for (int it = 0; it < 40; ++it) {
          const Point2 e = elastic.displacement_at(z.x, z.y);
          const Point2 next{q.x - e.x, q.y - e.y};
          const double step = std::abs(next.x - z.x) + std::abs(next.y - z.y);
          z = next;
          if (step < 1e-10) break;
        }
        const Point2 p = pair.affine.apply_inverse(z, cx, cy);
        pair.moving.at(x, y) = sample_bilinear(src, p.x, p.y);
      }
  });

  pair.fixed = src;
  if (cfg.noise_sigma > 0.0) {
    for (double& v : pair.fixed.data())
      v = std::clamp(v + cfg.noise_sigma * rng.gaussian(), 0.0, 1.0);
    for (double& v : pair.moving.data())
      v = std::clamp(v + cfg.noise_sigma * rng.gaussian(), 0.0, 1.0);
  }

  // control points at the strongest gradients of the clean source, spaced
  // at least control_min_dist apart, transferred through the exact field
  const GradientField g = gradient(src);
  std::vector<std::pair<double, Point2>> scored;
  const int margin = 8;
  scored.reserve(static_cast<size_t>(w - 2 * margin) * (h - 2 * margin));
  for (int y = margin; y < h - margin; ++y)
    for (int x = margin; x < w - margin; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      scored.push_back({std::abs(g.gx[i]) + std::abs(g.gy[i]),
                        {static_cast<double>(x), static_cast<double>(y)}});
    }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    if (a.second.y != b.second.y) return a.second.y < b.second.y;
    return a.second.x < b.second.x;
  });
  for (const auto& [score, pt] : scored) {
    bool ok = true;
    for (const Point2& c : pair.cp_fixed) {
      if (std::hypot(c.x - pt.x, c.y - pt.y) < cfg.control_min_dist) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    pair.cp_fixed.push_back(pt);
    if (static_cast<int>(pair.cp_fixed.size()) >= cfg.control_points) break;
  }
  if (static_cast<int>(pair.cp_fixed.size()) < 10)
    throw ArgumentError("make_pair: source too small for 10 spaced control points");
  pair.cp_moving = warp_points(pair.cp_fixed, pair.gt_field);
  return pair;
}

}  // namespace hybridreg
