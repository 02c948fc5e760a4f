#include "hybridreg/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hybridreg/parallel.hpp"

namespace fs = std::filesystem;

namespace hybridreg {

OptimConfig RunConfig::make_optim_config() const {
  OptimConfig oc;
  oc.levels = levels;
  oc.iters_per_level = iters_per_level;
  oc.step_size = step_size;
  oc.weights = weights;
  oc.seed = seed;
  oc.affinity_row_sample = affinity_row_sample;
  oc.stride = stride;
  oc.ncc_window = ncc_window;
  oc.guidance_top_k = guidance_top_k;
  return oc;
}

RansacParams RunConfig::make_ransac_params() const {
  RansacParams rp;
  rp.reproj_thresh = ransac_thresh;
  rp.max_iters = ransac_max_iters;
  rp.confidence = ransac_confidence;
  rp.seed = seed;
  return rp;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["working_res"] = working_res;
  j["lambda_p"] = weights.lambda_p;
  j["lambda_e"] = weights.lambda_e;
  j["lambda_s"] = weights.lambda_s;
  j["levels"] = levels;
  j["iters_per_level"] = iters_per_level;
  j["step_size"] = step_size;
  j["affinity_row_sample"] = affinity_row_sample;
  j["stride"] = stride;
  j["ncc_window"] = ncc_window;
  j["guidance_top_k"] = guidance_top_k;
  j["ransac_thresh"] = ransac_thresh;
  j["ransac_max_iters"] = ransac_max_iters;
  j["ransac_confidence"] = ransac_confidence;
  j["detector_max_points"] = detector_max_points;
  j["detector_nms_radius"] = detector_nms_radius;
  j["match_ratio"] = match_ratio;
  j["checkerboard_tile"] = checkerboard_tile;
  j["seed"] = seed;
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  c.working_res = j.value("working_res", c.working_res);
  c.weights.lambda_p = j.value("lambda_p", c.weights.lambda_p);
  c.weights.lambda_e = j.value("lambda_e", c.weights.lambda_e);
  c.weights.lambda_s = j.value("lambda_s", c.weights.lambda_s);
  c.levels = j.value("levels", c.levels);
  if (j.contains("iters_per_level"))
    c.iters_per_level = j["iters_per_level"].get<std::vector<int>>();
  c.step_size = j.value("step_size", c.step_size);
  c.affinity_row_sample = j.value("affinity_row_sample", c.affinity_row_sample);
  c.stride = j.value("stride", c.stride);
  c.ncc_window = j.value("ncc_window", c.ncc_window);
  c.guidance_top_k = j.value("guidance_top_k", c.guidance_top_k);
  c.ransac_thresh = j.value("ransac_thresh", c.ransac_thresh);
  c.ransac_max_iters = j.value("ransac_max_iters", c.ransac_max_iters);
  c.ransac_confidence = j.value("ransac_confidence", c.ransac_confidence);
  c.detector_max_points = j.value("detector_max_points", c.detector_max_points);
  c.detector_nms_radius = j.value("detector_nms_radius", c.detector_nms_radius);
  c.match_ratio = j.value("match_ratio", c.match_ratio);
  c.checkerboard_tile = j.value("checkerboard_tile", c.checkerboard_tile);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace {

void write_config_ini(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  const nlohmann::json j = cfg.to_json();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.value().is_array()) {
      std::ostringstream oss;
      for (size_t i = 0; i < it.value().size(); ++i)
        oss << (i ? " " : "") << it.value()[i];
      out << it.key() << "=" << oss.str() << "\n";
    } else {
      out << it.key() << "=" << it.value() << "\n";
    }
  }
}

nlohmann::json trace_to_json(const OptimTrace& t) {
  nlohmann::json j;
  auto& levels = j["levels"] = nlohmann::json::array();
  for (const LevelRecord& r : t.levels) {
    levels.push_back({{"width", r.width},
                      {"height", r.height},
                      {"iters", r.iters},
                      {"initial_loss", r.initial_loss},
                      {"final_loss", r.final_loss},
                      {"wall_ms", r.wall_ms}});
  }
  j["total_iterations"] = t.iterations.size();
  j["final_breakdown"] = {{"total", t.final_breakdown.total},
                          {"affinity", t.final_breakdown.affinity},
                          {"position", t.final_breakdown.position},
                          {"encc", t.final_breakdown.encc},
                          {"smoothness", t.final_breakdown.smoothness}};
  j["guidance_empty"] = t.guidance_empty;
  return j;
}

struct GtPoints {
  double frame_w = 0, frame_h = 0;
  std::vector<Point2> moving, fixed;  // native-frame coordinates
};

GtPoints load_points_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open points file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("points file: malformed JSON: ") + e.what());
  }
  if (!j.contains("frame") || !j.contains("matches"))
    throw FormatError("points file: expected {\"frame\":[w,h],\"matches\":[...]}");
  GtPoints g;
  g.frame_w = j["frame"][0].get<double>();
  g.frame_h = j["frame"][1].get<double>();
  for (const auto& rec : j["matches"]) {
    if (!rec.is_array() || rec.size() != 4)
      throw FormatError("points file: records must be [x_m,y_m,x_f,y_f]");
    g.moving.push_back({rec[0].get<double>(), rec[1].get<double>()});
    g.fixed.push_back({rec[2].get<double>(), rec[3].get<double>()});
  }
  return g;
}

// RMSE in the annotation's native frame. Global transfer maps the moving
// annotation through H; the final transfer additionally moves the fixed
// annotation through the field (pull convention) before comparing.
void evaluate_points(const GtPoints& gt, int work_w, int work_h, const Homography& h,
                     const DisplacementField* phi, double& rmse_global,
                     double& rmse_final) {
  const double rx = work_w / gt.frame_w, ry = work_h / gt.frame_h;
  std::vector<Point2> global_err, final_err, zero;
  zero.resize(gt.fixed.size());
  for (size_t i = 0; i < gt.fixed.size(); ++i) {
    const Point2 pf{gt.fixed[i].x * rx, gt.fixed[i].y * ry};
    const Point2 pm{gt.moving[i].x * rx, gt.moving[i].y * ry};
    const Point2 pm_reg = h.apply(pm);
    global_err.push_back({(pf.x - pm_reg.x) / rx, (pf.y - pm_reg.y) / ry});
    if (phi) {
      const Point2 d = phi->displacement_at(pf.x, pf.y);
      final_err.push_back({(pf.x + d.x - pm_reg.x) / rx, (pf.y + d.y - pm_reg.y) / ry});
    }
  }
  rmse_global = rmse(global_err, zero);
  rmse_final = phi ? rmse(final_err, zero) : rmse_global;
}

MatchSet transfer_to_registered_frame(const MatchSet& matches,
                                      const std::vector<bool>& inlier_mask,
                                      const Homography& h) {
  MatchSet out;
  out.source = matches.source;
  for (size_t i = 0; i < matches.pairs.size(); ++i) {
    if (!inlier_mask[i]) continue;
    const MatchPair& p = matches.pairs[i];
    out.pairs.push_back({h.apply(p.moving), p.fixed});
  }
  return out;
}

}  // namespace

nlohmann::json report_to_json(const RegistrationReport& r) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["stage"] = r.stage;
  j["seed"] = r.seed;
  j["inputs"] = {{"fixed", r.fixed_path}, {"moving", r.moving_path}};
  j["working"] = {{"width", r.width}, {"height", r.height}};
  j["matches"] = {{"source", r.match_source}, {"total", r.match_total}};
  j["ransac"] = {{"inlier_count", r.inlier_count}, {"iterations_used", r.ransac_iterations}};
  j["homography"] = r.homography;
  if (r.stage != "global_failed") j["optim"] = trace_to_json(r.trace);
  j["field"] = {{"file", "field.hrfd"},
                {"mean_abs", r.field_mean_abs},
                {"max_abs", r.field_max_abs},
                {"jacobian_min_det", r.field_jacobian.min_det},
                {"folding_fraction", r.field_jacobian.folding_fraction}};
  if (r.has_metrics) {
    j["metrics"] = {{"rmse_global", r.rmse_global},
                    {"rmse_final", r.rmse_final},
                    {"accepted", r.accepted}};
  }
  j["warnings"] = r.warnings;
  if (!r.error.empty()) j["error"] = r.error;
  j["config"] = r.config_echo;
  return j;
}

RegistrationReport register_pair(const std::string& fixed_path,
                                 const std::string& moving_path, const RunConfig& cfg,
                                 const std::string& out_dir,
                                 const std::string& matches_path,
                                 const std::string& points_path) {
  RegistrationReport report;
  report.seed = cfg.seed;
  report.fixed_path = fixed_path;
  report.moving_path = moving_path;
  report.config_echo = cfg.to_json();

  const GrayImage fixed_raw = load_image(fixed_path);
  const GrayImage moving_raw = load_image(moving_path);
  const GrayImage fixed = resize(fixed_raw, cfg.working_res, cfg.working_res);
  const GrayImage moving = resize(moving_raw, cfg.working_res, cfg.working_res);
  report.width = fixed.width();
  report.height = fixed.height();

  fs::create_directories(out_dir);
  const auto artifact = [&](const char* name) { return (fs::path(out_dir) / name).string(); };

  MatchSet matches;
  if (!matches_path.empty()) {
    matches = load_matches(matches_path, cfg.working_res, cfg.working_res);
    report.match_source = "ingested";
  } else {
    const auto kps_f = detect_harris(fixed, cfg.detector_max_points, cfg.detector_nms_radius);
    const auto kps_m = detect_harris(moving, cfg.detector_max_points, cfg.detector_nms_radius);
    matches = match_descriptors(moving, fixed, kps_m, kps_f, cfg.match_ratio);
    report.match_source = "builtin";
  }
  report.match_total = static_cast<int>(matches.size());

  const auto finish = [&](const RegistrationReport& r) {
    std::ofstream out(artifact("report.json"));
    out << report_to_json(r).dump(2) << "\n";
    write_config_ini(cfg, artifact("config.ini"));
    return r;
  };

  RansacResult rr;
  try {
    rr = ransac_homography(matches, cfg.make_ransac_params());
  } catch (const std::exception& e) {
    report.stage = "global_failed";
    report.error = e.what();
    return finish(report);
  }
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) report.homography[r * 3 + c] = rr.h.m[r][c];
  report.inlier_count = rr.inlier_count;
  report.ransac_iterations = rr.iterations_used;

  const GrayImage moving_global = warp_homography(moving, rr.h);
  const MatchSet registered = transfer_to_registered_frame(matches, rr.inlier_mask, rr.h);
  if (registered.empty()) report.warnings.push_back("no inlier matches; guidance inactive");

  DisplacementField phi;
  try {
    auto [field, trace] = register_deformable(fixed, moving_global, registered,
                                              cfg.make_optim_config());
    phi = std::move(field);
    report.trace = std::move(trace);
    if (report.trace.guidance_empty)
      report.warnings.push_back("guidance points empty; position loss inactive");
  } catch (const DivergenceError& e) {
    report.stage = "deform_failed";
    report.error = std::string(e.what()) + " (term: " + e.term + ")";
    return finish(report);
  }

  double mean_abs = 0.0, max_abs = 0.0;
  for (size_t i = 0; i < phi.size(); ++i) {
    const double m = std::hypot(phi.u[i], phi.v[i]);
    mean_abs += m;
    max_abs = std::max(max_abs, m);
  }
  report.field_mean_abs = mean_abs / phi.size();
  report.field_max_abs = max_abs;
  report.field_jacobian = jacobian_stats(phi);

  const GrayImage warped = warp_field(moving_global, phi);
  save_png(warped, artifact("warped.png"));
  save_field(phi, artifact("field.hrfd"));
  save_png(render_checkerboard(fixed, warped, cfg.checkerboard_tile),
           artifact("checkerboard.png"));

  if (!points_path.empty()) {
    const GtPoints gt = load_points_file(points_path);
    if (!gt.fixed.empty()) {
      evaluate_points(gt, cfg.working_res, cfg.working_res, rr.h, &phi,
                      report.rmse_global, report.rmse_final);
      report.has_metrics = true;
      report.accepted = report.rmse_final < kAcceptRmse;
    }
  }
  return finish(report);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

struct ManifestRow {
  std::string pair_id, fixed, moving, matches, points, category;
};

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("manifest is empty");
  const auto header = split_csv_line(line);
  auto col = [&](const std::string& name) {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int c_id = col("pair_id"), c_fixed = col("fixed"), c_moving = col("moving");
  const int c_matches = col("matches"), c_points = col("points"), c_cat = col("category");
  if (c_fixed < 0 || c_moving < 0)
    throw ValidationError("manifest must have 'fixed' and 'moving' columns");

  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    if (p.empty()) return p;
    const fs::path fp(p);
    return fp.is_absolute() ? p : (base / fp).string();
  };

  std::vector<ManifestRow> rows;
  int n = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    auto cell = [&](int c) { return (c >= 0 && c < static_cast<int>(cells.size())) ? cells[c] : std::string(); };
    ManifestRow r;
    r.pair_id = cell(c_id).empty() ? "pair_" + std::to_string(n) : cell(c_id);
    r.fixed = resolve(cell(c_fixed));
    r.moving = resolve(cell(c_moving));
    r.matches = resolve(cell(c_matches));
    r.points = resolve(cell(c_points));
    r.category = cell(c_cat);
    rows.push_back(std::move(r));
    ++n;
  }
  if (rows.empty()) throw ValidationError("manifest has no data rows");
  return rows;
}

}  // namespace

BatchResult run_batch(const std::string& manifest_path, const RunConfig& cfg,
                      const std::string& out_dir) {
  const auto rows = read_manifest(manifest_path);
  fs::create_directories(out_dir);

  std::vector<PairResult> results(rows.size());
  parallel_blocks(static_cast<int>(rows.size()), 1, [&](int, int i0, int i1) {
    for (int i = i0; i < i1; ++i) {
      const ManifestRow& row = rows[i];
      PairResult pr;
      pr.pair_id = row.pair_id;
      pr.category = row.category;
      try {
        const std::string pair_dir = (fs::path(out_dir) / row.pair_id).string();
        const RegistrationReport rep =
            register_pair(row.fixed, row.moving, cfg, pair_dir, row.matches, row.points);
        if (rep.stage != "ok") {
          pr.error = rep.stage + ": " + rep.error;
        } else if (rep.has_metrics) {
          pr.rmse_global = rep.rmse_global;
          pr.rmse_final = rep.rmse_final;
          pr.accepted = rep.accepted;
          pr.has_metrics = true;
        }
      } catch (const std::exception& e) {
        pr.error = e.what();
      }
      results[i] = std::move(pr);
    }
  });

  BatchResult batch = summarize_batch(std::move(results));
  write_batch_json(batch, (fs::path(out_dir) / "batch.json").string());
  write_batch_csv(batch, (fs::path(out_dir) / "summary.csv").string());
  return batch;
}

std::string synth_dataset(const std::string& src_dir, int n_pairs, const RunConfig& cfg,
                          const SynthConfig& synth_cfg, const std::string& out_dir) {
  if (n_pairs < 1) throw ArgumentError("synth_dataset: n_pairs must be >= 1");
  std::vector<std::string> sources;
  if (!fs::is_directory(src_dir)) throw ValidationError("synth_dataset: not a directory: " + src_dir);
  for (const auto& entry : fs::directory_iterator(src_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    if (ext == ".png" || ext == ".pgm" || ext == ".PNG" || ext == ".PGM")
      sources.push_back(entry.path().string());
  }
  std::sort(sources.begin(), sources.end());
  if (sources.empty())
    throw ValidationError("synth_dataset: no PNG/PGM images in " + src_dir);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    throw IoError("synth_dataset: cannot create output dir " + out_dir);
  {  // fail before generating anything if the directory is not writable
    const std::string probe = (fs::path(out_dir) / ".write_probe").string();
    std::ofstream p(probe);
    if (!p) throw IoError("synth_dataset: output dir not writable: " + out_dir);
    p.close();
    fs::remove(probe);
  }

  const std::string manifest_path = (fs::path(out_dir) / "manifest.csv").string();
  std::ofstream manifest(manifest_path);
  manifest << "pair_id,fixed,moving,matches,points,category\n";

  for (int i = 0; i < n_pairs; ++i) {
    const std::string& src_path = sources[i % sources.size()];
    const GrayImage src = resize(load_image(src_path), cfg.working_res, cfg.working_res);
    const SynthPair pair = make_pair(src, cfg.seed + static_cast<uint64_t>(i), synth_cfg);

    char name[32];
    std::snprintf(name, sizeof(name), "pair_%04d", i);
    const fs::path dir = fs::path(out_dir) / name;
    fs::create_directories(dir);
    save_png(pair.fixed, (dir / "fixed.png").string());
    save_png(pair.moving, (dir / "moving.png").string());
    save_field(pair.gt_field, (dir / "gt.hrfd").string());

    nlohmann::json pts;
    pts["frame"] = {pair.fixed.width(), pair.fixed.height()};
    auto& arr = pts["matches"] = nlohmann::json::array();
    for (size_t k = 0; k < pair.cp_fixed.size(); ++k)
      arr.push_back({pair.cp_moving[k].x, pair.cp_moving[k].y, pair.cp_fixed[k].x,
                     pair.cp_fixed[k].y});
    std::ofstream((dir / "points.json").string()) << pts.dump(2) << "\n";

    nlohmann::json params;
    params["seed"] = pair.seed;
    params["source"] = src_path;
    params["affine"] = {{"rot_deg", pair.affine.rot_deg},
                        {"tx", pair.affine.tx},
                        {"ty", pair.affine.ty},
                        {"scale", pair.affine.scale}};
    params["elastic"] = {{"intensity_requested", synth_cfg.elastic_intensity},
                         {"intensity_used", pair.elastic_intensity_used},
                         {"sigma", synth_cfg.elastic_sigma},
                         {"attempts", pair.elastic_attempts}};
    params["noise_sigma"] = synth_cfg.noise_sigma;
    std::ofstream((dir / "params.json").string()) << params.dump(2) << "\n";

    manifest << name << "," << (fs::path(name) / "fixed.png").string() << ","
             << (fs::path(name) / "moving.png").string() << ",,"
             << (fs::path(name) / "points.json").string() << ",synthetic\n";
  }
  return manifest_path;
}

}  // namespace hybridreg
