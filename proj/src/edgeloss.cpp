#include "hybridreg/edgeloss.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "filters.hpp"
#include "hybridreg/parallel.hpp"

namespace hybridreg {

namespace {

// (w+1)x(h+1) summed-area table
struct Sat {
  int w = 0, h = 0;
  std::vector<double> s;

  void build(const double* img, int width, int height) {
    w = width;
    h = height;
    s.assign(static_cast<size_t>(w + 1) * (h + 1), 0.0);
    for (int y = 0; y < h; ++y) {
      double row = 0.0;
      for (int x = 0; x < w; ++x) {
        row += img[static_cast<size_t>(y) * w + x];
        s[static_cast<size_t>(y + 1) * (w + 1) + (x + 1)] =
            s[static_cast<size_t>(y) * (w + 1) + (x + 1)] + row;
      }
    }
  }

  // inclusive rectangle sum
  double rect(int x0, int y0, int x1, int y1) const {
    const size_t stride = w + 1;
    return s[static_cast<size_t>(y1 + 1) * stride + (x1 + 1)] -
           s[static_cast<size_t>(y0) * stride + (x1 + 1)] -
           s[static_cast<size_t>(y1 + 1) * stride + (x0)] +
           s[static_cast<size_t>(y0) * stride + (x0)];
  }
};

std::vector<double> multiply(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

constexpr double kNccEps = 1e-8;

}  // namespace

EdgeMask canny_adaptive(const GrayImage& img) {
  const int w = img.width(), h = img.height();
  if (w < 16 || h < 16) throw ArgumentError("canny_adaptive: image must be >= 16x16");

  const auto kernel = detail::gaussian_kernel(1.4);
  const std::vector<double> blurred = detail::blur_separable(img.data(), w, h, kernel);
  GrayImage smooth(w, h, blurred);
  std::vector<double> gx, gy;
  detail::sobel(smooth, gx, gy);

  std::vector<double> mag(img.size());
  for (size_t i = 0; i < img.size(); ++i) mag[i] = std::hypot(gx[i], gy[i]);

  std::vector<double> sorted(mag);
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double low = 0.66 * median, high = 1.33 * median;

  auto m = [&](int x, int y) {
    x = std::clamp(x, 0, w - 1);
    y = std::clamp(y, 0, h - 1);
    return mag[static_cast<size_t>(y) * w + x];
  };

  // NMS along the quantized gradient direction; the strict/non-strict pair
  // breaks two-pixel plateaus deterministically
  std::vector<uint8_t> state(img.size(), 0);  // 0 none, 1 weak, 2 strong
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = static_cast<size_t>(y) * w + x;
      if (mag[i] <= low) continue;
      double angle = std::atan2(gy[i], gx[i]) * 180.0 / M_PI;
      if (angle < 0) angle += 180.0;
      double na, nb;
      if (angle < 22.5 || angle >= 157.5) {
        na = m(x - 1, y);
        nb = m(x + 1, y);
      } else if (angle < 67.5) {
        na = m(x - 1, y + 1);
        nb = m(x + 1, y - 1);
      } else if (angle < 112.5) {
        na = m(x, y - 1);
        nb = m(x, y + 1);
      } else {
        na = m(x - 1, y - 1);
        nb = m(x + 1, y + 1);
      }
      if (mag[i] > na && mag[i] >= nb) state[i] = mag[i] > high ? 2 : 1;
    }

  EdgeMask em;
  em.width = w;
  em.height = h;
  em.mask.assign(img.size(), 0);
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (state[static_cast<size_t>(y) * w + x] == 2) {
        em.mask[static_cast<size_t>(y) * w + x] = 1;
        queue.emplace_back(x, y);
      }
  while (!queue.empty()) {
    const auto [x, y] = queue.front();
    queue.pop_front();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int nx = x + dx, ny = y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const size_t j = static_cast<size_t>(ny) * w + nx;
        if (state[j] == 1 && !em.mask[j]) {
          em.mask[j] = 1;
          queue.emplace_back(nx, ny);
        }
      }
  }
  return em;
}

void save_edge_mask_png(const EdgeMask& em, const std::string& path) {
  GrayImage img(em.width, em.height);
  for (size_t i = 0; i < em.mask.size(); ++i) img.data()[i] = em.mask[i] ? 1.0 : 0.0;
  save_png(img, path);
}

namespace {

// Shared ENCC evaluation. Window sums via SATs, gradient via four more SATs
// over per-window coefficients (window membership is symmetric, so the
// transpose sums are plain box sums).
double encc_core(const GrayImage& fixed, const GrayImage& warped, const EdgeMask* em,
                 int w, GrayImage* ncc_out, std::vector<double>* d_warped) {
  if (fixed.width() != warped.width() || fixed.height() != warped.height())
    throw ArgumentError("encc: image dimension mismatch");
  if (w % 2 == 0 || w < 1) throw ArgumentError("encc: window size must be odd");
  if (em && (em->width != fixed.width() || em->height != fixed.height()))
    throw ArgumentError("encc: edge mask dimension mismatch");

  const int width = fixed.width(), height = fixed.height();
  const int half = w / 2;
  const size_t n_px = fixed.size();

  Sat sat_f, sat_t, sat_ff, sat_tt, sat_ft;
  sat_f.build(fixed.data().data(), width, height);
  sat_t.build(warped.data().data(), width, height);
  sat_ff.build(multiply(fixed.data(), fixed.data()).data(), width, height);
  sat_tt.build(multiply(warped.data(), warped.data()).data(), width, height);
  sat_ft.build(multiply(fixed.data(), warped.data()).data(), width, height);

  double weight_total = 0.0;
  if (em) {
    for (size_t i = 0; i < n_px; ++i) weight_total += 1.0 + em->mask[i];
  } else {
    weight_total = static_cast<double>(n_px);
  }

  // per-window coefficients for the gradient pass
  std::vector<double> p1, p2, p3, p4;
  if (d_warped) {
    p1.assign(n_px, 0.0);
    p2.assign(n_px, 0.0);
    p3.assign(n_px, 0.0);
    p4.assign(n_px, 0.0);
  }

  const double weighted_sum = parallel_sum_blocks(height, 32, [&](int y0, int y1) {
    double acc = 0.0;
    for (int y = y0; y < y1; ++y) {
      const int ry0 = std::max(0, y - half), ry1 = std::min(height - 1, y + half);
      for (int x = 0; x < width; ++x) {
        const int rx0 = std::max(0, x - half), rx1 = std::min(width - 1, x + half);
        const double n = static_cast<double>((rx1 - rx0 + 1) * (ry1 - ry0 + 1));
        const double sf = sat_f.rect(rx0, ry0, rx1, ry1);
        const double st = sat_t.rect(rx0, ry0, rx1, ry1);
        const double sff = sat_ff.rect(rx0, ry0, rx1, ry1);
        const double stt = sat_tt.rect(rx0, ry0, rx1, ry1);
        const double sft = sat_ft.rect(rx0, ry0, rx1, ry1);
        const double c = sft - sf * st / n;
        const double vf = sff - sf * sf / n;
        const double vt = stt - st * st / n;
        const double denom = vf * vt;

        const size_t i = static_cast<size_t>(y) * width + x;
        const double wp = em ? 1.0 + em->mask[i] : 1.0;
        double r = 0.0;
        if (denom > kNccEps) {
          r = std::min(c * c / denom, 1.0);
          if (d_warped) {
            const double a = 2.0 * wp * c / denom;
            const double b = 2.0 * wp * c * c / (denom * vt);
            p1[i] = a;
            p2[i] = a * (sf / n);
            p3[i] = b;
            p4[i] = b * (st / n);
          }
        }
        if (ncc_out) ncc_out->at(x, y) = r;
        acc += wp * r;
      }
    }
    return acc;
  });

  if (d_warped) {
    if (d_warped->size() != n_px)
      throw ArgumentError("encc: gradient buffer size mismatch");
    Sat sp1, sp2, sp3, sp4;
    sp1.build(p1.data(), width, height);
    sp2.build(p2.data(), width, height);
    sp3.build(p3.data(), width, height);
    sp4.build(p4.data(), width, height);
    const double inv_w = 1.0 / weight_total;
    parallel_blocks(height, 32, [&](int, int y0, int y1) {
      for (int y = y0; y < y1; ++y) {
        const int ry0 = std::max(0, y - half), ry1 = std::min(height - 1, y + half);
        for (int x = 0; x < width; ++x) {
          const int rx0 = std::max(0, x - half), rx1 = std::min(width - 1, x + half);
          const size_t i = static_cast<size_t>(y) * width + x;
          const double sum_r = fixed.data()[i] * sp1.rect(rx0, ry0, rx1, ry1) -
                               sp2.rect(rx0, ry0, rx1, ry1) -
                               warped.data()[i] * sp3.rect(rx0, ry0, rx1, ry1) +
                               sp4.rect(rx0, ry0, rx1, ry1);
          (*d_warped)[i] += -inv_w * sum_r;
        }
      }
    });
  }

  return -weighted_sum / weight_total;
}

}  // namespace

GrayImage local_ncc_map(const GrayImage& fixed, const GrayImage& warped, int w) {
  GrayImage out(fixed.width(), fixed.height());
  encc_core(fixed, warped, nullptr, w, &out, nullptr);
  return out;
}

double encc_loss(const GrayImage& fixed, const GrayImage& warped, const EdgeMask& em,
                 int w, std::vector<double>* d_warped) {
  return encc_core(fixed, warped, &em, w, nullptr, d_warped);
}

double ncc_loss(const GrayImage& fixed, const GrayImage& warped, int w,
                std::vector<double>* d_warped) {
  return encc_core(fixed, warped, nullptr, w, nullptr, d_warped);
}

double smoothness_loss(const DisplacementField& phi, std::vector<double>* d_u,
                       std::vector<double>* d_v) {
  const int w = phi.width, h = phi.height;
  if (w < 2 || h < 2) throw ArgumentError("smoothness_loss: field must be >= 2x2");

  const double nx = static_cast<double>(w - 1) * h;
  const double ny = static_cast<double>(w) * (h - 1);
  double sum_x = 0.0, sum_y = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const size_t i = phi.idx(x, y);
      if (x + 1 < w) {
        const double du = phi.u[i + 1] - phi.u[i];
        const double dv = phi.v[i + 1] - phi.v[i];
        sum_x += du * du + dv * dv;
        if (d_u) {
          (*d_u)[i] -= 2.0 * du / nx;
          (*d_u)[i + 1] += 2.0 * du / nx;
          (*d_v)[i] -= 2.0 * dv / nx;
          (*d_v)[i + 1] += 2.0 * dv / nx;
        }
      }
      if (y + 1 < h) {
        const double du = phi.u[i + w] - phi.u[i];
        const double dv = phi.v[i + w] - phi.v[i];
        sum_y += du * du + dv * dv;
        if (d_u) {
          (*d_u)[i] -= 2.0 * du / ny;
          (*d_u)[i + w] += 2.0 * du / ny;
          (*d_v)[i] -= 2.0 * dv / ny;
          (*d_v)[i + w] += 2.0 * dv / ny;
        }
      }
    }
  return sum_x / nx + sum_y / ny;
}

GuidanceState build_guidance(const GrayImage& fixed, const MatchSet& matches, int stride,
                             int ncc_window, int row_sample, uint64_t seed, int top_k) {
  GuidanceState gs;
  gs.stride = stride;
  gs.ncc_window = ncc_window;
  gs.edges = canny_adaptive(fixed);
  gs.affinity_gt = build_affinity_gt(matches, fixed.width(), fixed.height(), stride);
  gs.fg_fixed = build_feature_grid(fixed, stride);
  gs.points = select_guidance_points(matches, fixed, top_k);
  gs.affinity_rows = select_affinity_rows(gs.affinity_gt, row_sample, seed);
  gs.guidance_active = !matches.empty();
  return gs;
}

LossBreakdown total_loss(const GrayImage& fixed, const GrayImage& warped,
                         const DisplacementField& phi, const GuidanceState& gs,
                         const LossWeights& w) {
  LossBreakdown b;
  if (gs.guidance_active) {
    const FeatureGrid fg_warped = build_feature_grid(warped, gs.stride);
    b.affinity = affinity_loss(fg_warped, gs.fg_fixed, gs.affinity_gt, gs.affinity_rows,
                               warped.width(), warped.height(), gs.stride, nullptr);
    b.position = position_loss(gs.points, phi);
  }
  b.encc = encc_loss(fixed, warped, gs.edges, gs.ncc_window);
  b.smoothness = smoothness_loss(phi);
  b.guidance_empty = gs.points.empty();
  b.total = b.affinity + w.lambda_p * b.position + w.lambda_e * b.encc +
            w.lambda_s * b.smoothness;
  return b;
}

}  // namespace hybridreg
