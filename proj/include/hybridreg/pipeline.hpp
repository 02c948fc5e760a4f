#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hybridreg/eval.hpp"
#include "hybridreg/homography.hpp"
#include "hybridreg/optim.hpp"
#include "hybridreg/synth.hpp"

namespace hybridreg {

inline constexpr const char* kVersion = "0.1.0";

struct RunConfig {
  int working_res = 768;
  LossWeights weights;
  int levels = 3;
  std::vector<int> iters_per_level;  // empty = default schedule
  double step_size = 0.5;
  int affinity_row_sample = 1024;
  int stride = 8;
  int ncc_window = 15;
  int guidance_top_k = 120;
  double ransac_thresh = 3.0;
  int ransac_max_iters = 2000;
  double ransac_confidence = 0.999;
  int detector_max_points = 1000;
  int detector_nms_radius = 8;
  double match_ratio = 0.9;
  int checkerboard_tile = 64;
  uint64_t seed = 0;

  OptimConfig make_optim_config() const;
  RansacParams make_ransac_params() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

struct RegistrationReport {
  std::string stage = "ok";  // ok | global_failed | deform_failed
  uint64_t seed = 0;
  std::string fixed_path, moving_path;
  int width = 0, height = 0;
  std::string match_source;  // builtin | ingested
  int match_total = 0;
  int inlier_count = 0;
  int ransac_iterations = 0;
  std::array<double, 9> homography{1, 0, 0, 0, 1, 0, 0, 0, 1};
  OptimTrace trace;
  double field_mean_abs = 0.0;
  double field_max_abs = 0.0;
  JacobianStats field_jacobian;
  bool has_metrics = false;
  double rmse_global = 0.0;
  double rmse_final = 0.0;
  bool accepted = false;
  std::vector<std::string> warnings;
  std::string error;
  nlohmann::json config_echo;
};

nlohmann::json report_to_json(const RegistrationReport& r);

// Full progressive registration of one pair. Writes warped.png, field.hrfd,
// checkerboard.png, report.json and config.ini into out_dir. matches_path
// empty selects the built-in detector; points_path supplies ground-truth
// control points for RMSE metrics. Global or deformable failures are
// reported through `stage`, input errors throw.
RegistrationReport register_pair(const std::string& fixed_path,
                                 const std::string& moving_path, const RunConfig& cfg,
                                 const std::string& out_dir,
                                 const std::string& matches_path = "",
                                 const std::string& points_path = "");

// Manifest CSV: header pair_id,fixed,moving,matches,points,category with
// optional trailing columns; paths resolve relative to the manifest.
BatchResult run_batch(const std::string& manifest_path, const RunConfig& cfg,
                      const std::string& out_dir);

// Generates n_pairs synthetic bundles (round-robin over source images,
// resized to the working resolution) plus a batch manifest; returns the
// manifest path.
std::string synth_dataset(const std::string& src_dir, int n_pairs, const RunConfig& cfg,
                          const SynthConfig& synth_cfg, const std::string& out_dir);

}  // namespace hybridreg
