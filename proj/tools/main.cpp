#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "hybridreg/pipeline.hpp"

namespace {

using namespace hybridreg;

void add_config_options(CLI::App* cmd, RunConfig& cfg) {
  cmd->set_config("--config", "", "key=value config file; CLI flags override");
  cmd->add_option("--working-res", cfg.working_res, "working resolution (images resized)")
      ->capture_default_str();
  cmd->add_option("--lambda-p", cfg.weights.lambda_p, "position guidance weight")
      ->capture_default_str();
  cmd->add_option("--lambda-e", cfg.weights.lambda_e, "edge-guided NCC weight")
      ->capture_default_str();
  cmd->add_option("--lambda-s", cfg.weights.lambda_s, "smoothness weight")
      ->capture_default_str();
  cmd->add_option("--levels", cfg.levels, "pyramid levels")->capture_default_str();
  cmd->add_option("--iters", cfg.iters_per_level,
                  "iterations per level, coarse to fine (default 200 150 100)");
  cmd->add_option("--step-size", cfg.step_size, "Adam lr at the coarsest level")
      ->capture_default_str();
  cmd->add_option("--row-sample", cfg.affinity_row_sample,
                  "affinity rows sampled on large grids")
      ->capture_default_str();
  cmd->add_option("--stride", cfg.stride, "affinity grid stride")->capture_default_str();
  cmd->add_option("--ncc-window", cfg.ncc_window, "NCC window size (odd)")
      ->capture_default_str();
  cmd->add_option("--top-k", cfg.guidance_top_k, "guidance keypoints kept")
      ->capture_default_str();
  cmd->add_option("--ransac-thresh", cfg.ransac_thresh, "RANSAC reprojection threshold, px")
      ->capture_default_str();
  cmd->add_option("--ransac-iters", cfg.ransac_max_iters, "RANSAC max iterations")
      ->capture_default_str();
  cmd->add_option("--ransac-confidence", cfg.ransac_confidence, "RANSAC early-exit confidence")
      ->capture_default_str();
  cmd->add_option("--detector-points", cfg.detector_max_points, "Harris keypoint budget")
      ->capture_default_str();
  cmd->add_option("--detector-nms", cfg.detector_nms_radius, "Harris NMS radius, px")
      ->capture_default_str();
  cmd->add_option("--match-ratio", cfg.match_ratio, "Lowe ratio threshold")
      ->capture_default_str();
  cmd->add_option("--tile", cfg.checkerboard_tile, "checkerboard tile size, px")
      ->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "seed for all randomness")->capture_default_str();
}

int cmd_register(const std::string& fixed, const std::string& moving,
                 const std::string& matches, const std::string& points,
                 const std::string& out, const RunConfig& cfg) {
  const RegistrationReport rep = register_pair(fixed, moving, cfg, out, matches, points);
  std::cout << "stage: " << rep.stage << "\n";
  std::cout << "matches: " << rep.match_total << " (" << rep.match_source
            << "), inliers: " << rep.inlier_count << "\n";
  if (rep.stage == "ok") {
    std::cout << "field mean |phi|: " << rep.field_mean_abs
              << " px, max: " << rep.field_max_abs << " px\n";
    if (rep.has_metrics)
      std::cout << "rmse_global: " << rep.rmse_global << "  rmse_final: " << rep.rmse_final
                << "  accepted: " << (rep.accepted ? "yes" : "no") << "\n";
    std::cout << "artifacts in " << out << "\n";
    return 0;
  }
  std::cerr << "error: " << rep.error << "\n";
  return rep.stage == "global_failed" ? 2 : 3;
}

int cmd_batch(const std::string& manifest, const std::string& out, const RunConfig& cfg) {
  const BatchResult batch = run_batch(manifest, cfg, out);
  int failed = 0;
  for (const PairResult& p : batch.pairs)
    if (!p.error.empty()) ++failed;
  std::cout << "pairs: " << batch.pairs.size() << ", failed: " << failed << "\n";
  std::cout << "accept rate: " << batch.accept_rate << "\n";
  std::cout << "AUC global: " << batch.auc_global << "  AUC final: " << batch.auc_final
            << "\n";
  std::cout << "results in " << out << "\n";
  return failed == static_cast<int>(batch.pairs.size()) ? 2 : 0;
}

int cmd_synth(const std::string& src, int n_pairs, const std::string& out,
              const RunConfig& cfg, const SynthConfig& synth_cfg) {
  const std::string manifest = synth_dataset(src, n_pairs, cfg, synth_cfg, out);
  std::cout << "wrote " << n_pairs << " pairs, manifest: " << manifest << "\n";
  return 0;
}

int cmd_eval(const std::string& summary_csv, const std::string& out_json) {
  std::ifstream in(summary_csv);
  if (!in) throw IoError("cannot open " + summary_csv);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("summary CSV is empty");
  std::vector<PairResult> pairs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 3) continue;
    PairResult p;
    p.pair_id = cells[0];
    if (!cells[1].empty() && !cells[2].empty()) {
      p.rmse_global = std::stod(cells[1]);
      p.rmse_final = std::stod(cells[2]);
      p.accepted = p.rmse_final < kAcceptRmse;
      p.has_metrics = true;
    }
    if (cells.size() > 4) p.category = cells[4];
    pairs.push_back(std::move(p));
  }
  const BatchResult batch = summarize_batch(std::move(pairs));
  write_batch_json(batch, out_json);
  std::cout << "accept rate: " << batch.accept_rate << "\nAUC global: " << batch.auc_global
            << "  AUC final: " << batch.auc_final << "\nwrote " << out_json << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Progressive retinal image registration: global homography then "
               "deformable refinement over a dense displacement field"};
  app.require_subcommand(1);

  RunConfig cfg;
  SynthConfig synth_cfg;

  std::string fixed, moving, matches, points, out = "out";
  auto* reg = app.add_subcommand("register", "register one image pair");
  reg->add_option("--fixed", fixed, "fixed (target) image")->required();
  reg->add_option("--moving", moving, "moving image")->required();
  reg->add_option("--matches", matches, "precomputed match file (JSON); omit for built-in detector");
  reg->add_option("--points", points, "ground-truth control points (JSON) for metrics");
  reg->add_option("--out", out, "output directory")->capture_default_str();
  add_config_options(reg, cfg);

  std::string manifest;
  auto* batch = app.add_subcommand("batch", "register every pair in a manifest CSV");
  batch->add_option("--manifest", manifest, "manifest CSV")->required();
  batch->add_option("--out", out, "output directory")->capture_default_str();
  add_config_options(batch, cfg);

  std::string src_dir;
  int n_pairs = 10;
  auto* synth = app.add_subcommand("synth", "generate synthetic pairs with ground truth");
  synth->add_option("--src", src_dir, "directory of source images")->required();
  synth->add_option("--pairs", n_pairs, "number of pairs")->capture_default_str();
  synth->add_option("--out", out, "output directory")->capture_default_str();
  synth->add_option("--max-rot", synth_cfg.max_rot_deg, "max |rotation|, degrees")
      ->capture_default_str();
  synth->add_option("--max-trans", synth_cfg.max_trans_frac, "max |translation| as width fraction")
      ->capture_default_str();
  synth->add_option("--scale-lo", synth_cfg.scale_lo, "min scale")->capture_default_str();
  synth->add_option("--scale-hi", synth_cfg.scale_hi, "max scale")->capture_default_str();
  synth->add_option("--elastic-intensity", synth_cfg.elastic_intensity,
                    "peak elastic displacement, px at 768 scale")
      ->capture_default_str();
  synth->add_option("--elastic-sigma", synth_cfg.elastic_sigma, "elastic Gaussian sigma")
      ->capture_default_str();
  synth->add_option("--noise-sigma", synth_cfg.noise_sigma, "additive Gaussian noise sigma")
      ->capture_default_str();
  add_config_options(synth, cfg);

  std::string summary, eval_out = "metrics.json";
  auto* eval_cmd = app.add_subcommand("eval", "recompute metrics from a summary CSV");
  eval_cmd->add_option("--summary", summary, "summary.csv from a batch run")->required();
  eval_cmd->add_option("--out", eval_out, "output metrics JSON")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (reg->parsed()) return cmd_register(fixed, moving, matches, points, out, cfg);
    if (batch->parsed()) return cmd_batch(manifest, out, cfg);
    if (synth->parsed()) return cmd_synth(src_dir, n_pairs, out, cfg, synth_cfg);
    if (eval_cmd->parsed()) return cmd_eval(summary, eval_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
