#include "hybridreg/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "hybridreg/parallel.hpp"
#include "hybridreg/rng.hpp"

namespace hybridreg {

namespace {

inline double decay(int cell_a, int cell_b, int grid_w, int grid_h) {
  const int ax = cell_a % grid_w, ay = cell_a / grid_w;
  const int bx = cell_b % grid_w, by = cell_b / grid_w;
  const int diameter = (grid_w - 1) + (grid_h - 1);
  if (diameter == 0) return 1.0;
  const double d1 = static_cast<double>(std::abs(ax - bx) + std::abs(ay - by)) / diameter;
  return std::max(0.0, 1.0 - d1);
}

}  // namespace

double AffinityMap::value(int i, int j) const {
  double best = 0.0;
  for (int m : targets_of_moving[i]) best = std::max(best, decay(j, m, grid_w, grid_h));
  for (int n : sources_of_fixed[j]) best = std::max(best, decay(n, i, grid_w, grid_h));
  return best;
}

void AffinityMap::fill_row(int i, double* out) const {
  const int n_cells = cells();
  std::fill(out, out + n_cells, 0.0);
  for (int m : targets_of_moving[i])
    for (int j = 0; j < n_cells; ++j)
      out[j] = std::max(out[j], decay(j, m, grid_w, grid_h));
  for (int j : matched_fixed_cells) {
    double best = out[j];
    for (int n : sources_of_fixed[j]) best = std::max(best, decay(n, i, grid_w, grid_h));
    out[j] = best;
  }
}

std::vector<std::vector<double>> AffinityMap::dense() const {
  std::vector<std::vector<double>> a(cells(), std::vector<double>(cells(), 0.0));
  for (int i = 0; i < cells(); ++i) fill_row(i, a[i].data());
  return a;
}

AffinityMap build_affinity_gt(const MatchSet& matches, int image_w, int image_h,
                              int stride) {
  if (stride < 1) throw ArgumentError("build_affinity_gt: stride must be >= 1");
  AffinityMap a;
  a.grid_w = image_w / stride;
  a.grid_h = image_h / stride;
  if (a.grid_w < 1 || a.grid_h < 1)
    throw ArgumentError("build_affinity_gt: image smaller than one stride cell");
  a.targets_of_moving.resize(a.cells());
  a.sources_of_fixed.resize(a.cells());

  for (const MatchPair& p : matches.pairs) {
    const int mx = static_cast<int>(std::floor(p.moving.x / stride));
    const int my = static_cast<int>(std::floor(p.moving.y / stride));
    const int fx = static_cast<int>(std::floor(p.fixed.x / stride));
    const int fy = static_cast<int>(std::floor(p.fixed.y / stride));
    if (mx < 0 || my < 0 || fx < 0 || fy < 0 || mx >= a.grid_w || my >= a.grid_h ||
        fx >= a.grid_w || fy >= a.grid_h)
      continue;  // matches outside the grid are dropped
    const int mi = my * a.grid_w + mx;
    const int fi = fy * a.grid_w + fx;
    auto& t = a.targets_of_moving[mi];
    if (std::find(t.begin(), t.end(), fi) == t.end()) t.push_back(fi);
    auto& s = a.sources_of_fixed[fi];
    if (std::find(s.begin(), s.end(), mi) == s.end()) s.push_back(mi);
  }
  for (int c = 0; c < a.cells(); ++c) {
    if (!a.targets_of_moving[c].empty()) a.matched_moving_cells.push_back(c);
    if (!a.sources_of_fixed[c].empty()) a.matched_fixed_cells.push_back(c);
  }
  return a;
}

FeatureGrid build_feature_grid(const GrayImage& img, int stride) {
  if (img.width() < stride || img.height() < stride)
    throw ArgumentError("build_feature_grid: image smaller than one stride cell");
  FeatureGrid g;
  g.grid_w = img.width() / stride;
  g.grid_h = img.height() / stride;
  g.dim = stride * stride;
  const int n_cells = g.grid_w * g.grid_h;
  g.desc.assign(static_cast<size_t>(n_cells) * g.dim, 0.0);
  g.inv_norm.assign(n_cells, 0.0);

  for (int cy = 0; cy < g.grid_h; ++cy)
    for (int cx = 0; cx < g.grid_w; ++cx) {
      const int c = cy * g.grid_w + cx;
      double* d = g.desc.data() + static_cast<size_t>(c) * g.dim;
      double mean = 0.0;
      for (int j = 0; j < stride; ++j)
        for (int i = 0; i < stride; ++i) {
          d[j * stride + i] = img.at(cx * stride + i, cy * stride + j);
          mean += d[j * stride + i];
        }
      mean /= g.dim;
      double ssq = 0.0;
      for (int k = 0; k < g.dim; ++k) {
        d[k] -= mean;
        ssq += d[k] * d[k];
      }
      if (ssq / g.dim < 1e-8) {
        std::fill(d, d + g.dim, 0.0);
        continue;  // flat cell keeps the zero vector
      }
      const double inv = 1.0 / std::sqrt(ssq);
      for (int k = 0; k < g.dim; ++k) d[k] *= inv;
      g.inv_norm[c] = inv;
    }
  return g;
}

std::vector<int> select_affinity_rows(const AffinityMap& gt, int row_sample,
                                      uint64_t seed) {
  const int n = gt.cells();
  if (gt.grid_w <= 32 && gt.grid_h <= 32) {
    std::vector<int> rows(n);
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
  }
  std::set<int> rows(gt.matched_moving_cells.begin(), gt.matched_moving_cells.end());
  Rng rng(seed);
  for (int k = 0; k < row_sample && static_cast<int>(rows.size()) < n; ++k)
    rows.insert(static_cast<int>(rng.uniform_index(n)));
  return {rows.begin(), rows.end()};
}

double affinity_loss(const FeatureGrid& fgm, const FeatureGrid& fgf, const AffinityMap& gt,
                     const std::vector<int>& rows, int image_w, int image_h, int stride,
                     std::vector<double>* d_image) {
  if (fgm.grid_w != gt.grid_w || fgm.grid_h != gt.grid_h || fgf.grid_w != gt.grid_w ||
      fgf.grid_h != gt.grid_h || fgm.dim != fgf.dim)
    throw ArgumentError("affinity_loss: grid dimensions disagree");
  if (rows.empty()) return 0.0;

  const int n_cells = gt.cells();
  const int dim = fgm.dim;
  const double inv_count = 1.0 / (static_cast<double>(rows.size()) * n_cells);

  std::vector<double> row_loss(rows.size(), 0.0);
  // gradient w.r.t. each selected row's descriptor; rows touch disjoint cells
  std::vector<double> row_grad;
  if (d_image) row_grad.assign(rows.size() * static_cast<size_t>(dim), 0.0);

  parallel_blocks(static_cast<int>(rows.size()), 8, [&](int, int r0, int r1) {
    std::vector<double> gt_row(n_cells);
    for (int r = r0; r < r1; ++r) {
      const int i = rows[r];
      gt.fill_row(i, gt_row.data());
      const double* u = fgm.cell(i);
      double* gu = d_image ? row_grad.data() + static_cast<size_t>(r) * dim : nullptr;
      double acc = 0.0;
      for (int j = 0; j < n_cells; ++j) {
        const double* f = fgf.cell(j);
        double dot = 0.0;
        for (int k = 0; k < dim; ++k) dot += u[k] * f[k];
        const double ap = std::clamp(dot, 0.0, 1.0);
        const double resid = ap - gt_row[j];
        acc += resid * resid;
        if (gu && dot > 0.0 && dot < 1.0) {
          const double c = 2.0 * resid;
          for (int k = 0; k < dim; ++k) gu[k] += c * f[k];
        }
      }
      row_loss[r] = acc;
    }
  });

  double loss = 0.0;
  for (double v : row_loss) loss += v;
  loss *= inv_count;

  if (d_image) {
    if (static_cast<int>(d_image->size()) != image_w * image_h)
      throw ArgumentError("affinity_loss: gradient buffer size mismatch");
    // chain through the zero-mean unit-norm descriptor into the patch pixels:
    // d(dot)/dx = (g - (u.g) u) / ||centered patch|| for zero-mean g
    for (size_t r = 0; r < rows.size(); ++r) {
      const int i = rows[r];
      const double inv_n = fgm.inv_norm[i];
      if (inv_n == 0.0) continue;  // flat cell, no gradient
      const double* u = fgm.cell(i);
      const double* g = row_grad.data() + r * static_cast<size_t>(dim);
      double ug = 0.0;
      for (int k = 0; k < dim; ++k) ug += u[k] * g[k];
      const int cx = i % gt.grid_w, cy = i / gt.grid_w;
      for (int j = 0; j < stride; ++j)
        for (int ii = 0; ii < stride; ++ii) {
          const int k = j * stride + ii;
          const double dk = (g[k] - ug * u[k]) * inv_n * inv_count;
          (*d_image)[static_cast<size_t>(cy * stride + j) * image_w + (cx * stride + ii)] +=
              dk;
        }
    }
  }
  return loss;
}

double affinity_loss(const FeatureGrid& fgm, const FeatureGrid& fgf, const AffinityMap& gt,
                     int row_sample, uint64_t seed) {
  const auto rows = select_affinity_rows(gt, row_sample, seed);
  return affinity_loss(fgm, fgf, gt, rows, fgm.grid_w * 8, fgm.grid_h * 8, 8, nullptr);
}

GuidancePoints select_guidance_points(const MatchSet& matches, const GrayImage& fixed_img,
                                      int k) {
  struct Scored {
    double score;
    Point2 pm, pf;
  };
  const GradientField g = gradient(fixed_img);
  std::vector<Scored> scored;
  scored.reserve(matches.size());
  for (const MatchPair& p : matches.pairs) {
    const int x = std::clamp(static_cast<int>(std::lround(p.fixed.x)), 0,
                             fixed_img.width() - 1);
    const int y = std::clamp(static_cast<int>(std::lround(p.fixed.y)), 0,
                             fixed_img.height() - 1);
    const size_t i = static_cast<size_t>(y) * fixed_img.width() + x;
    scored.push_back({std::abs(g.gx[i]) + std::abs(g.gy[i]), p.moving, p.fixed});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.pf.y != b.pf.y) return a.pf.y < b.pf.y;
    return a.pf.x < b.pf.x;
  });
  GuidancePoints gp;
  const int keep = std::min<int>(k, static_cast<int>(scored.size()));
  gp.p_m.reserve(keep);
  gp.p_f.reserve(keep);
  for (int i = 0; i < keep; ++i) {
    gp.p_m.push_back(scored[i].pm);
    gp.p_f.push_back(scored[i].pf);
  }
  return gp;
}

namespace {
inline double smooth_l1(double d) {
  const double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}
inline double smooth_l1_grad(double d) {
  return std::abs(d) < 1.0 ? d : (d > 0.0 ? 1.0 : -1.0);
}
}  // namespace

double position_loss(const GuidancePoints& gp, const DisplacementField& phi,
                     std::vector<double>* d_field_u, std::vector<double>* d_field_v) {
  if (gp.empty()) return 0.0;
  const int w = phi.width, h = phi.height;
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(gp.size());
  for (size_t p = 0; p < gp.size(); ++p) {
    const Point2 pf = gp.p_f[p];
    const double x = std::clamp(pf.x, 0.0, static_cast<double>(w - 1));
    const double y = std::clamp(pf.y, 0.0, static_cast<double>(h - 1));
    const int x0 = std::max(0, std::min(static_cast<int>(std::floor(x)), w - 2));
    const int y0 = std::max(0, std::min(static_cast<int>(std::floor(y)), h - 2));
    const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0, fy = y - y0;
    const double w00 = (1 - fx) * (1 - fy), w10 = fx * (1 - fy);
    const double w01 = (1 - fx) * fy, w11 = fx * fy;
    const size_t i00 = phi.idx(x0, y0), i10 = phi.idx(x1, y0);
    const size_t i01 = phi.idx(x0, y1), i11 = phi.idx(x1, y1);

    const double du = w00 * phi.u[i00] + w10 * phi.u[i10] + w01 * phi.u[i01] + w11 * phi.u[i11];
    const double dv = w00 * phi.v[i00] + w10 * phi.v[i10] + w01 * phi.v[i01] + w11 * phi.v[i11];
    const double rx = pf.x + du - gp.p_m[p].x;
    const double ry = pf.y + dv - gp.p_m[p].y;
    loss += smooth_l1(rx) + smooth_l1(ry);

    if (d_field_u && d_field_v) {
      const double gx = smooth_l1_grad(rx) * inv_n;
      const double gy = smooth_l1_grad(ry) * inv_n;
      (*d_field_u)[i00] += gx * w00;
      (*d_field_u)[i10] += gx * w10;
      (*d_field_u)[i01] += gx * w01;
      (*d_field_u)[i11] += gx * w11;
      (*d_field_v)[i00] += gy * w00;
      (*d_field_v)[i10] += gy * w10;
      (*d_field_v)[i01] += gy * w01;
      (*d_field_v)[i11] += gy * w11;
    }
  }
  return loss * inv_n;
}

void dump_affinity_pgm(const AffinityMap& gt, const std::string& path) {
  const int n = gt.cells();
  GrayImage img(n, n);
  std::vector<double> row(n);
  for (int i = 0; i < n; ++i) {
    gt.fill_row(i, row.data());
    for (int j = 0; j < n; ++j) img.at(j, i) = row[j];
  }
  save_pgm(img, path);
}

}  // namespace hybridreg
