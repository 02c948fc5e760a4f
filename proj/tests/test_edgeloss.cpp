#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hybridreg/edgeloss.hpp"
#include "hybridreg/rng.hpp"
#include "support/gradcheck.hpp"
#include "support/testutil.hpp"

using namespace hybridreg;

namespace {

DisplacementField small_random_field(int w, int h, double amp, uint64_t seed) {
  Rng rng(seed);
  DisplacementField phi(w, h);
  for (size_t i = 0; i < phi.size(); ++i) {
    phi.u[i] = rng.uniform(-amp, amp);
    phi.v[i] = rng.uniform(-amp, amp);
  }
  return phi;
}

EdgeMask zero_mask(int w, int h) {
  EdgeMask em;
  em.width = w;
  em.height = h;
  em.mask.assign(static_cast<size_t>(w) * h, 0);
  return em;
}

}  // namespace

TEST_CASE("canny: constant image yields an empty mask") {
  const EdgeMask em = canny_adaptive(GrayImage(48, 48, 0.5));
  for (uint8_t v : em.mask) CHECK(v == 0);
}

TEST_CASE("canny: vertical step produces a thin line at the step") {
  GrayImage img(64, 64, 0.0);
  for (int y = 0; y < 64; ++y)
    for (int x = 32; x < 64; ++x) img.at(x, y) = 1.0;
  const EdgeMask em = canny_adaptive(img);
  for (int y = 8; y < 56; ++y) {
    int count = 0, where = -1;
    for (int x = 0; x < 64; ++x) {
      if (em.at(x, y)) {
        ++count;
        where = x;
      }
    }
    CHECK(count == 1);  // NMS thinning: one pixel per row
    CHECK(std::abs(where - 31.5) <= 1.5);
  }
}

TEST_CASE("canny: mask values are exactly 0/1 on random input") {
  const GrayImage img = testutil::make_fundus(96, 96, 17);
  const EdgeMask em = canny_adaptive(img);
  size_t ones = 0;
  for (uint8_t v : em.mask) {
    CHECK((v == 0 || v == 1));
    ones += v;
  }
  CHECK(ones > 0);  // vessels produce edges
  CHECK(em.width == 96);
}

TEST_CASE("local NCC: perfect, affine, and flat cases") {
  const GrayImage img = testutil::make_fundus(64, 64, 19);
  const GrayImage same_map = local_ncc_map(img, img, 15);
  for (int y = 8; y < 56; ++y)
    for (int x = 8; x < 56; ++x) CHECK(same_map.at(x, y) == doctest::Approx(1.0));

  GrayImage affine(64, 64);
  for (size_t i = 0; i < img.size(); ++i) affine.data()[i] = 0.5 * img.data()[i] + 0.2;
  const GrayImage aff_map = local_ncc_map(img, affine, 15);
  for (int y = 8; y < 56; ++y)
    for (int x = 8; x < 56; ++x) CHECK(aff_map.at(x, y) == doctest::Approx(1.0));

  const GrayImage flat_map = local_ncc_map(GrayImage(32, 32, 0.3), GrayImage(32, 32, 0.8), 15);
  for (double v : flat_map.data()) CHECK(v == 0.0);

  // squared correlation stays in [0,1]
  const GrayImage other = testutil::make_fundus(64, 64, 23);
  const GrayImage map = local_ncc_map(img, other, 15);
  for (double v : map.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS_AS(local_ncc_map(img, other, 14), ArgumentError);
}

TEST_CASE("encc: identical images give exactly -1") {
  const GrayImage img = testutil::make_fundus(64, 64, 29);
  const EdgeMask em = canny_adaptive(img);
  CHECK(encc_loss(img, img, em, 15) == -1.0);
  CHECK(encc_loss(img, img, zero_mask(64, 64), 15) == -1.0);
}

TEST_CASE("encc: zero mask equals the plain NCC objective bitwise") {
  const GrayImage a = testutil::make_fundus(64, 64, 31);
  const GrayImage b = testutil::make_fundus(64, 64, 37);
  CHECK(encc_loss(a, b, zero_mask(64, 64), 15) == ncc_loss(a, b, 15));
}

TEST_CASE("encc: weighting follows the (1+E) formula exactly") {
  const GrayImage a = testutil::make_fundus(64, 64, 41);
  const GrayImage b = testutil::make_fundus(64, 64, 43);
  const GrayImage map = local_ncc_map(a, b, 15);

  EdgeMask em = zero_mask(64, 64);
  Rng rng(47);
  for (uint8_t& v : em.mask) v = rng.uniform() < 0.3 ? 1 : 0;

  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < map.size(); ++i) {
    num += (1.0 + em.mask[i]) * map.data()[i];
    den += 1.0 + em.mask[i];
  }
  CHECK(encc_loss(a, b, em, 15) == doctest::Approx(-num / den).epsilon(1e-12));

  // mask concentrated on the worst-correlated pixels worsens the loss
  std::vector<size_t> order(map.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t x, size_t y) { return map.data()[x] < map.data()[y]; });
  EdgeMask worst = zero_mask(64, 64);
  for (size_t k = 0; k < map.size() / 4; ++k) worst.mask[order[k]] = 1;
  CHECK(encc_loss(a, b, worst, 15) > encc_loss(a, b, zero_mask(64, 64), 15));

  CHECK_THROWS_AS(encc_loss(a, testutil::make_fundus(32, 32, 1), em, 15), ArgumentError);
}

TEST_CASE("encc: loss bounded in [-1, 0]") {
  Rng rng(53);
  for (int t = 0; t < 10; ++t) {
    const GrayImage a = testutil::make_smooth_random(40, 40, 100 + t);
    const GrayImage b = testutil::make_smooth_random(40, 40, 200 + t);
    EdgeMask em = zero_mask(40, 40);
    for (uint8_t& v : em.mask) v = rng.uniform() < 0.5 ? 1 : 0;
    const double l = encc_loss(a, b, em, 15);
    CHECK(l >= -1.0);
    CHECK(l <= 0.0);
  }
}

TEST_CASE("smoothness: forced values and oracle") {
  CHECK(smoothness_loss(DisplacementField(16, 16)) == 0.0);

  DisplacementField ramp(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) ramp.u[ramp.idx(x, y)] = x;
  CHECK(smoothness_loss(ramp) == doctest::Approx(1.0).epsilon(1e-15));

  const DisplacementField rnd = small_random_field(13, 9, 2.0, 57);
  // independent double-loop oracle, same per-direction-mean convention
  double sx = 0.0, sy = 0.0;
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 13; ++x) {
      if (x + 1 < 13) {
        const double du = rnd.u[rnd.idx(x + 1, y)] - rnd.u[rnd.idx(x, y)];
        const double dv = rnd.v[rnd.idx(x + 1, y)] - rnd.v[rnd.idx(x, y)];
        sx += du * du + dv * dv;
      }
      if (y + 1 < 9) {
        const double du = rnd.u[rnd.idx(x, y + 1)] - rnd.u[rnd.idx(x, y)];
        const double dv = rnd.v[rnd.idx(x, y + 1)] - rnd.v[rnd.idx(x, y)];
        sy += du * du + dv * dv;
      }
    }
  const double expected = sx / (12.0 * 9.0) + sy / (13.0 * 8.0);
  CHECK(smoothness_loss(rnd) == doctest::Approx(expected).epsilon(1e-10));

  // invariant under a global constant shift
  DisplacementField shifted = rnd;
  for (double& u : shifted.u) u += 17.25;
  for (double& v : shifted.v) v += -4.5;
  CHECK(smoothness_loss(shifted) == doctest::Approx(smoothness_loss(rnd)).epsilon(1e-12));
}

TEST_CASE("total loss composition at the aligned optimum") {
  const GrayImage img = testutil::make_fundus(64, 64, 61);
  MatchSet self;
  Rng rng(63);
  for (int k = 0; k < 30; ++k) {
    const Point2 p{rng.uniform(8, 56), rng.uniform(8, 56)};
    self.pairs.push_back({p, p});
  }
  const GuidanceState gs = build_guidance(img, self, 8, 15, 1024, 0);
  const DisplacementField zero(64, 64);
  const LossWeights w;
  const LossBreakdown b = total_loss(img, img, zero, gs, w);
  CHECK(b.position == 0.0);
  CHECK(b.smoothness == 0.0);
  CHECK(b.encc == -1.0);
  CHECK(b.affinity >= 0.0);
  CHECK(b.total == doctest::Approx(b.affinity - 2.0).epsilon(1e-12));

  // doubling lambda_s doubles the smoothness contribution exactly
  DisplacementField wob = small_random_field(64, 64, 0.5, 67);
  LossWeights w2 = w;
  w2.lambda_s *= 2.0;
  const LossBreakdown b1 = total_loss(img, img, wob, gs, w);
  const LossBreakdown b2 = total_loss(img, img, wob, gs, w2);
  CHECK(b1.smoothness == b2.smoothness);
  CHECK(b2.total - b1.total == doctest::Approx(w.lambda_s * b1.smoothness).epsilon(1e-12));
}

TEST_CASE("analytic gradients match finite differences per term") {
  const int n = 16;
  const GrayImage fixed = testutil::make_smooth_random(n, n, 71);
  const GrayImage moving = testutil::make_smooth_random(n, n, 73);
  const DisplacementField phi = small_random_field(n, n, 0.8, 79);
  const EdgeMask em = canny_adaptive(fixed);

  SUBCASE("encc through the warp") {
    GrayImage warped(n, n);
    std::vector<double> dwx(phi.size()), dwy(phi.size());
    warp_field_with_grad(moving, phi, warped, dwx, dwy);
    std::vector<double> d_img(phi.size(), 0.0);
    encc_loss(fixed, warped, em, 15, &d_img);
    std::vector<double> gu(phi.size()), gv(phi.size());
    for (size_t i = 0; i < phi.size(); ++i) {
      gu[i] = d_img[i] * dwx[i];
      gv[i] = d_img[i] * dwy[i];
    }
    const auto stats = testutil::fd_check_field(
        phi,
        [&](const DisplacementField& p) {
          return encc_loss(fixed, warp_field(moving, p), em, 15);
        },
        gu, gv);
    CHECK(stats.pass_fraction() >= 0.99);
  }

  SUBCASE("smoothness direct") {
    std::vector<double> gu(phi.size(), 0.0), gv(phi.size(), 0.0);
    smoothness_loss(phi, &gu, &gv);
    const auto stats = testutil::fd_check_field(
        phi, [](const DisplacementField& p) { return smoothness_loss(p); }, gu, gv);
    CHECK(stats.pass_fraction() >= 0.99);
  }
}
