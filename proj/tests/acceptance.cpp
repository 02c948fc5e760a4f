// Acceptance suite: runs every gate criterion at its stated tolerance and
// prints one PASS/FAIL line per criterion. Exits nonzero on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <vector>

#include "hybridreg/pipeline.hpp"
#include "support/gradcheck.hpp"
#include "support/testutil.hpp"

using namespace hybridreg;

namespace {

struct Runner {
  bool all_ok = true;

  void run(const std::string& name, const std::function<bool(std::string&)>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s  %-28s (%.1f s)%s%s\n", ok ? "PASS" : "FAIL", name.c_str(), secs,
                detail.empty() ? "" : "  ", detail.c_str());
    std::fflush(stdout);
    all_ok &= ok;
  }
};

// ---------------------------------------------------------------- criterion 1

double oracle_affinity(const std::vector<std::pair<int, int>>& cell_matches, int gw,
                       int gh, int i, int j) {
  const double diameter = (gw - 1) + (gh - 1);
  auto d1 = [&](int a, int b) {
    const int ax = a % gw, ay = a / gw, bx = b % gw, by = b / gw;
    return (std::abs(ax - bx) + std::abs(ay - by)) / std::max(1.0, diameter);
  };
  double val = 0.0;
  for (const auto& [mc, fc] : cell_matches) {
    if (mc == i && fc == j) val = std::max(val, 1.0);
    if (mc == i) val = std::max(val, std::max(0.0, 1.0 - d1(j, fc)));
    if (fc == j) val = std::max(val, std::max(0.0, 1.0 - d1(mc, i)));
  }
  return val;
}

bool affinity_oracle_equivalence(std::string& detail) {
  Rng rng(1);
  int cases = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int gw = 2 + static_cast<int>(rng.uniform_index(7));
    const int gh = 2 + static_cast<int>(rng.uniform_index(7));
    std::vector<std::pair<int, int>> cell_matches;
    const int n = static_cast<int>(rng.uniform_index(12));
    MatchSet ms;
    for (int k = 0; k < n; ++k) {
      const int mc = static_cast<int>(rng.uniform_index(gw * gh));
      const int fc = static_cast<int>(rng.uniform_index(gw * gh));
      cell_matches.push_back({mc, fc});
      ms.pairs.push_back({{(mc % gw) * 8.0 + rng.uniform(0.0, 7.9),
                           (mc / gw) * 8.0 + rng.uniform(0.0, 7.9)},
                          {(fc % gw) * 8.0 + rng.uniform(0.0, 7.9),
                           (fc / gw) * 8.0 + rng.uniform(0.0, 7.9)}});
    }
    const AffinityMap a = build_affinity_gt(ms, gw * 8, gh * 8, 8);
    const auto dense = a.dense();
    for (int i = 0; i < a.cells(); ++i)
      for (int j = 0; j < a.cells(); ++j)
        if (dense[i][j] != oracle_affinity(cell_matches, gw, gh, i, j)) {
          detail = "mismatch at trial " + std::to_string(trial);
          return false;
        }
    ++cases;
  }
  detail = std::to_string(cases) + " seeded cases, exact";
  return true;
}

// ---------------------------------------------------------------- criterion 2

bool gradient_suite(std::string& detail) {
  int total = 0, ok = 0;
  double max_rel = 0.0;
  auto absorb = [&](const testutil::FdStats& s) {
    total += s.total;
    ok += s.ok;
    max_rel = std::max(max_rel, s.max_rel);
  };

  for (uint64_t seed = 0; seed < 3; ++seed) {
    const int n = 16;
    const GrayImage fixed = testutil::make_smooth_random(n, n, 300 + seed);
    const GrayImage moving = testutil::make_smooth_random(n, n, 400 + seed);
    Rng rng(500 + seed);
    MatchSet ms;
    for (int k = 0; k < 6; ++k)
      ms.pairs.push_back({{rng.uniform(2, n - 3), rng.uniform(2, n - 3)},
                          {rng.uniform(2, n - 3), rng.uniform(2, n - 3)}});
    const GuidanceState gs = build_guidance(fixed, ms, 8, 15, 1024, 0);
    DisplacementField phi(n, n);
    for (size_t i = 0; i < phi.size(); ++i) {
      phi.u[i] = rng.uniform(-0.8, 0.8);
      phi.v[i] = rng.uniform(-0.8, 0.8);
    }
    const size_t n_px = phi.size();

    GrayImage warped(n, n);
    std::vector<double> dwx(n_px), dwy(n_px);
    warp_field_with_grad(moving, phi, warped, dwx, dwy);

    {  // L_a through the warp
      std::vector<double> d_img(n_px, 0.0), gu(n_px), gv(n_px);
      const auto rows = gs.affinity_rows;
      affinity_loss(build_feature_grid(warped, 8), gs.fg_fixed, gs.affinity_gt, rows, n, n,
                    8, &d_img);
      for (size_t i = 0; i < n_px; ++i) {
        gu[i] = d_img[i] * dwx[i];
        gv[i] = d_img[i] * dwy[i];
      }
      absorb(testutil::fd_check_field(
          phi,
          [&](const DisplacementField& p) {
            return affinity_loss(build_feature_grid(warp_field(moving, p), 8), gs.fg_fixed,
                                 gs.affinity_gt, rows, n, n, 8, nullptr);
          },
          gu, gv));
    }
    {  // L_p
      std::vector<double> gu(n_px, 0.0), gv(n_px, 0.0);
      position_loss(gs.points, phi, &gu, &gv);
      absorb(testutil::fd_check_field(
          phi, [&](const DisplacementField& p) { return position_loss(gs.points, p); },
          gu, gv));
    }
    {  // L_e (ENCC) through the warp
      std::vector<double> d_img(n_px, 0.0), gu(n_px), gv(n_px);
      encc_loss(fixed, warped, gs.edges, 15, &d_img);
      for (size_t i = 0; i < n_px; ++i) {
        gu[i] = d_img[i] * dwx[i];
        gv[i] = d_img[i] * dwy[i];
      }
      absorb(testutil::fd_check_field(
          phi,
          [&](const DisplacementField& p) {
            return encc_loss(fixed, warp_field(moving, p), gs.edges, 15);
          },
          gu, gv));
    }
    {  // L_smooth
      std::vector<double> gu(n_px, 0.0), gv(n_px, 0.0);
      smoothness_loss(phi, &gu, &gv);
      absorb(testutil::fd_check_field(
          phi, [](const DisplacementField& p) { return smoothness_loss(p); }, gu, gv));
    }
    {  // total objective
      std::vector<double> gu, gv;
      const LossWeights w;
      eval_total_loss_grad(fixed, moving, phi, gs, w, gu, gv);
      absorb(testutil::fd_check_field(
          phi,
          [&](const DisplacementField& p) {
            return total_loss(fixed, warp_field(moving, p), p, gs, w).total;
          },
          gu, gv));
    }
  }

  const double frac = static_cast<double>(ok) / total;
  std::ostringstream oss;
  oss << ok << "/" << total << " coords within 1e-4 (" << frac * 100.0 << "%)";
  detail = oss.str();
  return frac >= 0.99;
}

// ---------------------------------------------------------------- criterion 3

bool homography_recovery(std::string& detail) {
  Rng rng(7);
  int successes = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    Homography h;
    const double angle = rng.uniform(-0.4, 0.4);
    const double s = rng.uniform(0.85, 1.15);
    h.m[0][0] = s * std::cos(angle);
    h.m[0][1] = -s * std::sin(angle);
    h.m[1][0] = s * std::sin(angle);
    h.m[1][1] = s * std::cos(angle);
    h.m[0][2] = rng.uniform(-60, 60);
    h.m[1][2] = rng.uniform(-60, 60);
    h.m[2][0] = rng.uniform(-2e-4, 2e-4);
    h.m[2][1] = rng.uniform(-2e-4, 2e-4);

    MatchSet ms;
    for (int i = 0; i < 20; ++i) {
      const Point2 src{rng.uniform(40, 728), rng.uniform(40, 728)};
      ms.pairs.push_back({src, h.apply(src)});
    }
    for (int o = 0; o < 9; ++o)  // ~30% outliers
      ms.pairs.push_back({{rng.uniform(0, 768), rng.uniform(0, 768)},
                          {rng.uniform(0, 768), rng.uniform(0, 768)}});

    RansacParams params;
    params.seed = seed;
    try {
      const RansacResult rr = ransac_homography(ms, params);
      double worst = 0.0;
      for (const Point2 c :
           {Point2{0, 0}, Point2{768, 0}, Point2{0, 768}, Point2{768, 768}}) {
        const Point2 pa = rr.h.apply(c), pb = h.apply(c);
        worst = std::max(worst, std::hypot(pa.x - pb.x, pa.y - pb.y));
      }
      if (worst < 0.5) ++successes;
    } catch (const std::exception&) {
    }
  }
  detail = std::to_string(successes) + "/100 trials, corner error < 0.5 px";
  return successes >= 95;
}

// ---------------------------------------------------------------- criterion 4

bool hybrid_beats_global(std::string& detail) {
  testutil::TempDir tmp("accept_hybrid");
  save_png(testutil::make_fundus(256, 256, 1001), tmp.file("src1.png"));
  save_png(testutil::make_fundus(256, 256, 1002), tmp.file("src2.png"));
  save_png(testutil::make_fundus(256, 256, 1003), tmp.file("src3.png"));

  RunConfig cfg;
  cfg.working_res = 256;
  cfg.seed = 2024;
  SynthConfig synth_cfg;  // affine + elastic (intensity resolution-scaled), sigma 6

  const std::string manifest = synth_dataset(tmp.dir(), 20, cfg, synth_cfg,
                                             tmp.file("data"));
  const BatchResult batch = run_batch(manifest, cfg, tmp.file("results"));

  int improved = 0, evaluated = 0;
  std::vector<double> reductions;
  for (const PairResult& p : batch.pairs) {
    if (!p.error.empty() || !p.has_metrics) continue;
    ++evaluated;
    if (p.rmse_final < p.rmse_global) ++improved;
    if (p.rmse_global > 0)
      reductions.push_back((p.rmse_global - p.rmse_final) / p.rmse_global);
  }
  std::sort(reductions.begin(), reductions.end());
  const double median_reduction =
      reductions.empty()
          ? 0.0
          : (reductions.size() % 2 ? reductions[reductions.size() / 2]
                                   : 0.5 * (reductions[reductions.size() / 2 - 1] +
                                            reductions[reductions.size() / 2]));
  const double auc_gain = batch.auc_final - batch.auc_global;

  std::ostringstream oss;
  oss << improved << "/20 improved, median reduction " << median_reduction * 100.0
      << "%, AUC " << batch.auc_global * 100.0 << " -> " << batch.auc_final * 100.0;
  detail = oss.str();
  return evaluated == 20 && improved >= 18 && median_reduction >= 0.30 &&
         auc_gain >= 0.03;
}

// ---------------------------------------------------------------- criterion 5

bool metric_protocol(std::string& detail) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(12));
    std::vector<double> rmses;
    for (int i = 0; i < n; ++i) rmses.push_back(rng.uniform(0.0, 30.0));
    double acc = 0.0;
    for (int t = 0; t <= 25; ++t) {
      int okc = 0;
      for (double r : rmses)
        if (r <= t) ++okc;
      acc += static_cast<double>(okc) / n;
    }
    if (auc(rmses) != acc / 26.0) {
      detail = "auc mismatch";
      return false;
    }

    std::vector<Point2> pa, pb;
    for (int i = 0; i < n; ++i) {
      pa.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10)});
      pb.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10)});
    }
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double dx = pa[i].x - pb[i].x, dy = pa[i].y - pb[i].y;
      sum += dx * dx + dy * dy;
    }
    if (rmse(pa, pb) != std::sqrt(sum / n)) {
      detail = "rmse mismatch";
      return false;
    }
  }
  if (!is_accepted(19.999) || is_accepted(20.0)) {
    detail = "accept boundary wrong";
    return false;
  }
  detail = "200 oracle cases exact; boundary strict at 20";
  return true;
}

// ---------------------------------------------------------------- criterion 6

bool encc_behavior(std::string& detail) {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const GrayImage a = testutil::make_fundus(96, 96, 2000 + seed);
    const GrayImage b = testutil::make_fundus(96, 96, 3000 + seed);
    EdgeMask zero;
    zero.width = zero.height = 96;
    zero.mask.assign(96 * 96, 0);
    if (encc_loss(a, b, zero, 15) != ncc_loss(a, b, 15)) {
      detail = "zero-mask loss differs from plain NCC";
      return false;
    }

    Rng rng(4000 + seed);
    EdgeMask em = zero;
    for (uint8_t& v : em.mask) v = rng.uniform() < 0.4 ? 1 : 0;
    const GrayImage map = local_ncc_map(a, b, 15);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < map.size(); ++i) {
      num += (1.0 + em.mask[i]) * map.data()[i];
      den += 1.0 + em.mask[i];
    }
    if (std::abs(encc_loss(a, b, em, 15) - (-num / den)) > 1e-12) {
      detail = "(1+E) weighting formula violated";
      return false;
    }
  }
  detail = "bitwise at E=0; weighted form exact on constructed masks";
  return true;
}

// ---------------------------------------------------------------- criterion 7

bool numbers_equal(const nlohmann::json& a, const nlohmann::json& b,
                   const std::string& path, std::string& where) {
  if (a.type() != b.type()) {
    where = path + " (type)";
    return false;
  }
  if (a.is_object()) {
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (it.key() == "wall_ms") continue;  // timing is not a registration output
      if (!b.contains(it.key())) {
        where = path + "/" + it.key() + " (missing)";
        return false;
      }
      if (!numbers_equal(it.value(), b[it.key()], path + "/" + it.key(), where))
        return false;
    }
    return true;
  }
  if (a.is_array()) {
    if (a.size() != b.size()) {
      where = path + " (size)";
      return false;
    }
    for (size_t i = 0; i < a.size(); ++i)
      if (!numbers_equal(a[i], b[i], path + "[" + std::to_string(i) + "]", where))
        return false;
    return true;
  }
  if (a == b) return true;
  where = path;
  return false;
}

bool determinism(std::string& detail) {
  testutil::TempDir tmp("accept_determ");
  const GrayImage src = testutil::make_fundus(256, 256, 5000);
  SynthConfig synth_cfg;
  const SynthPair pair = make_pair(src, 77, synth_cfg);
  save_png(pair.fixed, tmp.file("f.png"));
  save_png(pair.moving, tmp.file("m.png"));

  RunConfig cfg;
  cfg.working_res = 256;
  cfg.seed = 99;
  cfg.iters_per_level = {80, 60, 40};

  register_pair(tmp.file("f.png"), tmp.file("m.png"), cfg, tmp.file("a"));
  register_pair(tmp.file("f.png"), tmp.file("m.png"), cfg, tmp.file("b"));

  std::ifstream fa(tmp.file("a") + "/report.json"), fb(tmp.file("b") + "/report.json");
  nlohmann::json ja, jb;
  fa >> ja;
  fb >> jb;
  std::string where;
  if (!numbers_equal(ja, jb, "", where)) {
    detail = "reports differ at " + where;
    return false;
  }
  detail = "repeated run bitwise identical (timing keys excluded)";
  return true;
}

// ---------------------------------------------------------------- criterion 8

bool identity_sanity(std::string& detail) {
  testutil::TempDir tmp("accept_ident");
  const GrayImage img = testutil::make_fundus(256, 256, 6000);
  save_png(img, tmp.file("img.png"));

  nlohmann::json pts;
  pts["frame"] = {256, 256};
  auto& arr = pts["matches"] = nlohmann::json::array();
  for (int k = 0; k < 12; ++k) {
    const double x = 16.0 + 224.0 * (k % 4) / 3.0, y = 16.0 + 224.0 * (k / 4) / 2.0;
    arr.push_back({x, y, x, y});
  }
  std::ofstream(tmp.file("pts.json")) << pts.dump();

  RunConfig cfg;
  cfg.working_res = 256;
  cfg.seed = 3;
  const RegistrationReport rep = register_pair(tmp.file("img.png"), tmp.file("img.png"),
                                               cfg, tmp.file("out"), "", tmp.file("pts.json"));
  std::ostringstream oss;
  oss << "mean |phi| = " << rep.field_mean_abs << " px, rmse_final = " << rep.rmse_final;
  detail = oss.str();
  return rep.stage == "ok" && rep.field_mean_abs < 0.05 && rep.has_metrics &&
         rep.rmse_final < 0.1;
}

}  // namespace

int main() {
  Runner r;
  r.run("affinity-gt-oracle", affinity_oracle_equivalence);
  r.run("gradient-suite", gradient_suite);
  r.run("homography-recovery", homography_recovery);
  r.run("hybrid-beats-global", hybrid_beats_global);
  r.run("metric-protocol", metric_protocol);
  r.run("encc-behavior", encc_behavior);
  r.run("determinism", determinism);
  r.run("identity-sanity", identity_sanity);
  std::printf("%s\n", r.all_ok ? "ALL ACCEPTANCE CRITERIA PASSED" : "ACCEPTANCE FAILURES PRESENT");
  return r.all_ok ? 0 : 1;
}
