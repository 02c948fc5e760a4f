#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hybridreg/homography.hpp"
#include "hybridreg/rng.hpp"
#include "support/testutil.hpp"

using namespace hybridreg;

namespace {

Homography random_projective(Rng& rng, double coord_scale) {
  // similarity plus a mild projective part; well conditioned by construction
  Homography h;
  const double angle = rng.uniform(-0.4, 0.4);
  const double s = rng.uniform(0.8, 1.2);
  h.m[0][0] = s * std::cos(angle);
  h.m[0][1] = -s * std::sin(angle);
  h.m[1][0] = s * std::sin(angle);
  h.m[1][1] = s * std::cos(angle);
  h.m[0][2] = rng.uniform(-0.1, 0.1) * coord_scale;
  h.m[1][2] = rng.uniform(-0.1, 0.1) * coord_scale;
  h.m[2][0] = rng.uniform(-0.2, 0.2) / coord_scale;
  h.m[2][1] = rng.uniform(-0.2, 0.2) / coord_scale;
  return h;
}

std::vector<MatchPair> exact_pairs(const Homography& h, Rng& rng, int n, double scale) {
  std::vector<MatchPair> pairs;
  for (int i = 0; i < n; ++i) {
    const Point2 src{rng.uniform(0.05, 0.95) * scale, rng.uniform(0.05, 0.95) * scale};
    pairs.push_back({src, h.apply(src)});
  }
  return pairs;
}

double corner_transfer_error(const Homography& a, const Homography& b, double scale) {
  double worst = 0.0;
  for (const Point2 c : {Point2{0, 0}, Point2{scale, 0}, Point2{0, scale},
                         Point2{scale, scale}}) {
    const Point2 pa = a.apply(c), pb = b.apply(c);
    worst = std::max(worst, std::hypot(pa.x - pb.x, pa.y - pb.y));
  }
  return worst;
}

}  // namespace

TEST_CASE("dlt: identity and pure translation") {
  std::vector<MatchPair> same = {{{0, 0}, {0, 0}}, {{10, 0}, {10, 0}},
                                 {{0, 10}, {0, 10}}, {{10, 10}, {10, 10}}};
  const Homography hi = dlt(same);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      CHECK(hi.m[r][c] == doctest::Approx(r == c ? 1.0 : 0.0).epsilon(1e-9));

  std::vector<MatchPair> shifted;
  for (const MatchPair& p : same)
    shifted.push_back({p.moving, {p.fixed.x + 5.0, p.fixed.y}});
  const Homography ht = dlt(shifted);
  CHECK(ht.m[0][2] == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(ht.m[1][2] == doctest::Approx(0.0));
}

TEST_CASE("dlt: recovers a random projective transform") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const Homography h = random_projective(rng, 100.0);
    const auto pairs = exact_pairs(h, rng, 6, 100.0);
    const Homography rec = dlt(pairs);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        CHECK(std::abs(rec.m[r][c] - h.m[r][c]) < 1e-6);
  }
}

TEST_CASE("dlt: normalization keeps recovery exact at coordinates x1000") {
  Rng rng(78);
  for (int trial = 0; trial < 10; ++trial) {
    const Homography h = random_projective(rng, 100000.0);
    const auto pairs = exact_pairs(h, rng, 8, 100000.0);
    const Homography rec = dlt(pairs);
    CHECK(corner_transfer_error(rec, h, 100000.0) < 1e-5);
  }
}

TEST_CASE("dlt: degenerate configurations rejected") {
  std::vector<MatchPair> colinear = {{{0, 0}, {0, 0}}, {{1, 1}, {1, 1}},
                                     {{2, 2}, {2, 2}}, {{3, 3}, {3, 3}}};
  CHECK_THROWS_AS(dlt(colinear), DegeneracyError);
  CHECK_THROWS_AS(dlt({{{0, 0}, {0, 0}}, {{1, 1}, {1, 1}}}), InsufficientDataError);
}

TEST_CASE("ransac: clean inliers recover the transform") {
  Rng rng(101);
  const Homography h = random_projective(rng, 500.0);
  MatchSet ms;
  ms.pairs = exact_pairs(h, rng, 20, 500.0);
  RansacParams params;
  params.seed = 4;
  const RansacResult rr = ransac_homography(ms, params);
  CHECK(rr.inlier_count == 20);
  CHECK(corner_transfer_error(rr.h, h, 500.0) < 1e-6);
}

TEST_CASE("ransac: outlier contamination over 100 seeds") {
  Rng rng(202);
  int successes = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    const Homography h = random_projective(rng, 500.0);
    MatchSet ms;
    ms.pairs = exact_pairs(h, rng, 20, 500.0);
    for (int o = 0; o < 8; ++o)
      ms.pairs.push_back({{rng.uniform(0, 500), rng.uniform(0, 500)},
                          {rng.uniform(0, 500), rng.uniform(0, 500)}});
    RansacParams params;
    params.seed = seed;
    try {
      const RansacResult rr = ransac_homography(ms, params);
      bool all_inliers_found = true;
      for (int i = 0; i < 20; ++i) all_inliers_found &= rr.inlier_mask[i];
      int outliers_admitted = 0;
      for (int i = 20; i < 28; ++i) outliers_admitted += rr.inlier_mask[i] ? 1 : 0;
      if (all_inliers_found && outliers_admitted <= 1 &&
          corner_transfer_error(rr.h, h, 500.0) < 0.5)
        ++successes;
    } catch (const std::exception&) {
    }
  }
  CHECK(successes >= 95);
}

TEST_CASE("ransac: determinism and error paths") {
  Rng rng(303);
  const Homography h = random_projective(rng, 300.0);
  MatchSet ms;
  ms.pairs = exact_pairs(h, rng, 12, 300.0);
  for (int o = 0; o < 4; ++o)
    ms.pairs.push_back({{rng.uniform(0, 300), rng.uniform(0, 300)},
                        {rng.uniform(0, 300), rng.uniform(0, 300)}});
  RansacParams params;
  params.seed = 99;
  const RansacResult a = ransac_homography(ms, params);
  const RansacResult b = ransac_homography(ms, params);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) CHECK(a.h.m[r][c] == b.h.m[r][c]);
  CHECK(a.inlier_mask == b.inlier_mask);
  CHECK(a.iterations_used == b.iterations_used);

  MatchSet three;
  three.pairs = {{{0, 0}, {0, 0}}, {{5, 0}, {5, 0}}, {{0, 5}, {0, 5}}};
  CHECK_THROWS_AS(ransac_homography(three, params), InsufficientDataError);
}

TEST_CASE("warp_homography: identity is bit-exact") {
  const GrayImage img = testutil::make_fundus(64, 64, 9);
  const GrayImage out = warp_homography(img, Homography::identity());
  for (size_t i = 0; i < img.size(); ++i) CHECK(out.data()[i] == img.data()[i]);
}

TEST_CASE("warp_homography: translation round trip") {
  const GrayImage img = testutil::make_fundus(64, 64, 10);
  Homography fwd = Homography::identity();
  fwd.m[0][2] = 5.0;
  Homography bwd = Homography::identity();
  bwd.m[0][2] = -5.0;
  const GrayImage back = warp_homography(warp_homography(img, fwd), bwd);
  for (int y = 6; y < 58; ++y)
    for (int x = 6; x < 58; ++x) CHECK(std::abs(back.at(x, y) - img.at(x, y)) < 0.02);
}

TEST_CASE("warp_homography: rotation matches analytic rendering") {
  const int n = 96;
  const double c = 0.5 * (n - 1);
  auto pattern = [&](double x, double y) {
    const double r = std::hypot(x - c, y - c);
    const double t = std::atan2(y - c, x - c);
    return 0.5 + 0.35 * std::sin(r / 4.0) * std::cos(3.0 * t);
  };
  GrayImage img(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) img.at(x, y) = pattern(x, y);

  const double a = 0.3;
  Homography rot = Homography::identity();  // rotation about the center
  rot.m[0][0] = std::cos(a);
  rot.m[0][1] = -std::sin(a);
  rot.m[1][0] = std::sin(a);
  rot.m[1][1] = std::cos(a);
  rot.m[0][2] = c - std::cos(a) * c + std::sin(a) * c;
  rot.m[1][2] = c - std::sin(a) * c - std::cos(a) * c;

  const GrayImage warped = warp_homography(img, rot);
  const Homography inv = rot.inverse();
  for (int y = 16; y < n - 16; ++y)
    for (int x = 16; x < n - 16; ++x) {
      if (std::hypot(x - c, y - c) < 12.0) continue;  // angular term aliases at r ~ 0
      const Point2 src = inv.apply({static_cast<double>(x), static_cast<double>(y)});
      CHECK(std::abs(warped.at(x, y) - pattern(src.x, src.y)) < 0.03);
    }
  Homography singular;
  singular.m = {{{1, 0, 0}, {2, 0, 0}, {0, 0, 1}}};
  CHECK_THROWS_AS(warp_homography(img, singular), DegeneracyError);
}
