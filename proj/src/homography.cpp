#include "hybridreg/homography.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "hybridreg/parallel.hpp"
#include "hybridreg/rng.hpp"

namespace hybridreg {

namespace {

Eigen::Matrix3d to_eigen(const Homography& h) {
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = h.m[r][c];
  return m;
}

Homography from_eigen(const Eigen::Matrix3d& m) {
  if (std::abs(m(2, 2)) < 1e-15) throw DegeneracyError("homography: m[2][2] ~ 0");
  Homography h;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) h.m[r][c] = m(r, c) / m(2, 2);
  const double det2 = h.m[0][0] * h.m[1][1] - h.m[0][1] * h.m[1][0];
  if (!std::isfinite(det2) || std::abs(det2) < 1e-12)
    throw DegeneracyError("homography: degenerate upper-left 2x2 block");
  return h;
}

// similarity that moves points to centroid 0 with mean distance sqrt(2)
Eigen::Matrix3d hartley_transform(const std::vector<Point2>& pts) {
  double cx = 0, cy = 0;
  for (const Point2& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= pts.size();
  cy /= pts.size();
  double mean_dist = 0;
  for (const Point2& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
  mean_dist /= pts.size();
  const double s = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

double sym_transfer_error(const Homography& h, const Homography& hinv, const MatchPair& p) {
  const Point2 fwd = h.apply(p.moving);
  const Point2 bwd = hinv.apply(p.fixed);
  const double e1 = std::hypot(fwd.x - p.fixed.x, fwd.y - p.fixed.y);
  const double e2 = std::hypot(bwd.x - p.moving.x, bwd.y - p.moving.y);
  return std::max(e1, e2);
}

}  // namespace

Homography Homography::inverse() const {
  const Eigen::Matrix3d m = to_eigen(*this);
  if (std::abs(m.determinant()) < 1e-12) throw DegeneracyError("homography: not invertible");
  return from_eigen(Eigen::Matrix3d(m.inverse()));
}

Homography dlt(const std::vector<MatchPair>& pairs) {
  const size_t n = pairs.size();
  if (n < 4) throw InsufficientDataError("dlt: need at least 4 correspondences");

  std::vector<Point2> src(n), dst(n);
  for (size_t i = 0; i < n; ++i) {
    src[i] = pairs[i].moving;
    dst[i] = pairs[i].fixed;
  }
  const Eigen::Matrix3d ts = hartley_transform(src);
  const Eigen::Matrix3d td = hartley_transform(dst);

  Eigen::MatrixXd a(2 * n, 9);
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d p = ts * Eigen::Vector3d(src[i].x, src[i].y, 1.0);
    const Eigen::Vector3d q = td * Eigen::Vector3d(dst[i].x, dst[i].y, 1.0);
    const double x = p(0) / p(2), y = p(1) / p(2);
    const double u = q(0) / q(2), v = q(1) / q(2);
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // rank < 8 means the configuration does not pin down a homography
  if (sv(7) < 1e-9 * sv(0))
    throw DegeneracyError("dlt: degenerate point configuration");
  const Eigen::VectorXd hvec = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << hvec(0), hvec(1), hvec(2), hvec(3), hvec(4), hvec(5), hvec(6), hvec(7), hvec(8);
  return from_eigen(Eigen::Matrix3d(td.inverse() * hn * ts));
}

RansacResult ransac_homography(const MatchSet& matches, const RansacParams& params) {
  const auto& pairs = matches.pairs;
  const int n = static_cast<int>(pairs.size());
  if (n < 4) throw InsufficientDataError("ransac_homography: need at least 4 matches");

  Rng rng(params.seed);
  RansacResult best;
  best.inlier_count = 0;

  int needed_iters = params.max_iters;
  int iter = 0;
  for (; iter < params.max_iters && iter < needed_iters; ++iter) {
    // minimal sample of 4 distinct indices
    int idx[4];
    for (int k = 0; k < 4;) {
      const int cand = static_cast<int>(rng.uniform_index(n));
      bool dup = false;
      for (int j = 0; j < k; ++j) dup |= (idx[j] == cand);
      if (!dup) idx[k++] = cand;
    }
    std::vector<MatchPair> sample = {pairs[idx[0]], pairs[idx[1]], pairs[idx[2]],
                                     pairs[idx[3]]};
    Homography h;
    try {
      h = dlt(sample);
    } catch (const DegeneracyError&) {
      continue;
    }
    Homography hinv;
    try {
      hinv = h.inverse();
    } catch (const DegeneracyError&) {
      continue;
    }

    std::vector<bool> mask(n, false);
    int count = 0;
    for (int i = 0; i < n; ++i) {
      if (sym_transfer_error(h, hinv, pairs[i]) < params.reproj_thresh) {
        mask[i] = true;
        ++count;
      }
    }
    if (count > best.inlier_count) {
      best.inlier_count = count;
      best.inlier_mask = std::move(mask);
      best.h = h;
      // adaptive iteration bound at the requested confidence
      const double w = static_cast<double>(count) / n;
      const double p_all = std::pow(w, 4);
      if (p_all >= 1.0 - 1e-12) {
        needed_iters = iter + 1;
      } else if (p_all > 0.0) {
        const double denom = std::log(1.0 - p_all);
        needed_iters = static_cast<int>(
            std::min<double>(params.max_iters,
                             std::ceil(std::log(1.0 - params.confidence) / denom)));
      }
    }
  }

  if (best.inlier_count < 4)
    throw RansacFailure("ransac_homography: no model with >= 4 inliers");

  // refit on all inliers
  std::vector<MatchPair> inliers;
  inliers.reserve(best.inlier_count);
  for (int i = 0; i < n; ++i)
    if (best.inlier_mask[i]) inliers.push_back(pairs[i]);
  try {
    const Homography refit = dlt(inliers);
    const Homography refit_inv = refit.inverse();
    std::vector<bool> mask(n, false);
    int count = 0;
    for (int i = 0; i < n; ++i) {
      if (sym_transfer_error(refit, refit_inv, pairs[i]) < params.reproj_thresh) {
        mask[i] = true;
        ++count;
      }
    }
    if (count >= 4) {
      best.h = refit;
      best.inlier_mask = std::move(mask);
      best.inlier_count = count;
    }
  } catch (const DegeneracyError&) {
    // keep the minimal-sample model
  }

  best.iterations_used = iter;
  return best;
}

GrayImage warp_homography(const GrayImage& img, const Homography& h) {
  const Homography hinv = h.inverse();
  GrayImage out(img.width(), img.height());
  parallel_blocks(img.height(), 64, [&](int, int y0, int y1) {
    for (int y = y0; y < y1; ++y)
      for (int x = 0; x < img.width(); ++x) {
        const Point2 src = hinv.apply({static_cast<double>(x), static_cast<double>(y)});
        out.at(x, y) = sample_bilinear(img, src.x, src.y);
      }
  });
  return out;
}

}  // namespace hybridreg
