#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "hybridreg/eval.hpp"
#include "hybridreg/rng.hpp"
#include "support/testutil.hpp"

using namespace hybridreg;

TEST_CASE("rmse: forced values") {
  const std::vector<Point2> a = {{1, 2}, {3, 4}};
  CHECK(rmse(a, a) == 0.0);

  CHECK(rmse({{0, 0}}, {{3, 4}}) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(rmse({{0, 0}, {0, 0}}, {{0, 0}, {3, 4}}) ==
        doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
  CHECK_THROWS_AS(rmse(a, {{0, 0}}), ArgumentError);
  CHECK_THROWS_AS(rmse({}, {}), ArgumentError);
}

TEST_CASE("auc: forced values and brute-force oracle") {
  CHECK(auc({0.0, 0.0, 0.0}) == 1.0);
  CHECK(auc({10.0}) == doctest::Approx(16.0 / 26.0).epsilon(1e-15));
  CHECK(auc({26.0, 100.0, 40.0}) == 0.0);
  CHECK_THROWS_AS(auc({}), ArgumentError);

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> rmses;
    const int n = 1 + static_cast<int>(rng.uniform_index(10));
    for (int i = 0; i < n; ++i) rmses.push_back(rng.uniform(0.0, 30.0));

    // brute-force double loop over pairs x thresholds
    double acc = 0.0;
    for (int t = 0; t <= 25; ++t) {
      int ok = 0;
      for (double r : rmses)
        if (r <= t) ++ok;
      acc += static_cast<double>(ok) / n;
    }
    CHECK(auc(rmses) == acc / 26.0);
  }
}

TEST_CASE("auc: monotone when an rmse decreases") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> rmses;
    for (int i = 0; i < 6; ++i) rmses.push_back(rng.uniform(0.0, 30.0));
    const double before = auc(rmses);
    const size_t k = rng.uniform_index(6);
    rmses[k] = std::max(0.0, rmses[k] - rng.uniform(0.0, 10.0));
    CHECK(auc(rmses) >= before);
  }
}

TEST_CASE("accept boundary is strict at 20") {
  CHECK(is_accepted(19.999));
  CHECK(!is_accepted(20.0));
  CHECK(!is_accepted(20.001));
}

TEST_CASE("checkerboard: identity, single tile, structure") {
  const GrayImage img = testutil::make_fundus(64, 64, 3);
  const GrayImage same = render_checkerboard(img, img, 16);
  for (size_t i = 0; i < img.size(); ++i) CHECK(same.data()[i] == img.data()[i]);

  const GrayImage white(64, 64, 1.0);
  const GrayImage black(64, 64, 0.0);
  const GrayImage single = render_checkerboard(white, black, 64);
  for (double v : single.data()) CHECK(v == 1.0);  // one tile: fixed only

  const GrayImage board = render_checkerboard(white, black, 16);
  for (int ty = 0; ty < 4; ++ty)
    for (int tx = 0; tx < 4; ++tx) {
      const double expected = (tx + ty) % 2 == 0 ? 1.0 : 0.0;
      for (int y = ty * 16; y < (ty + 1) * 16; ++y)
        for (int x = tx * 16; x < (tx + 1) * 16; ++x)
          CHECK(board.at(x, y) == expected);
    }

  CHECK_THROWS_AS(render_checkerboard(white, GrayImage(32, 32, 0.0), 16), ArgumentError);
  CHECK_THROWS_AS(render_checkerboard(white, black, 4), ArgumentError);
}

TEST_CASE("batch summary aggregates only evaluated pairs") {
  std::vector<PairResult> pairs(4);
  pairs[0] = {"a", 10.0, 5.0, true, true, "", ""};
  pairs[1] = {"b", 30.0, 25.0, false, true, "", ""};
  pairs[2] = {"c", 0.0, 0.0, false, false, "", "global_failed: x"};
  pairs[3] = {"d", 0.0, 0.0, false, false, "", ""};  // no ground truth
  const BatchResult b = summarize_batch(pairs);
  CHECK(b.accept_rate == 0.5);
  CHECK(b.auc_final == doctest::Approx((21.0 / 26.0 + 1.0 / 26.0) / 2.0));
  CHECK(b.mean_rmse_final == doctest::Approx(15.0));

  testutil::TempDir tmp("batchjson");
  write_batch_json(b, tmp.file("batch.json"));
  write_batch_csv(b, tmp.file("summary.csv"));
  std::ifstream in(tmp.file("summary.csv"));
  std::string header;
  std::getline(in, header);
  CHECK(header == "pair_id,rmse_global,rmse_final,accepted,category,error");
}
