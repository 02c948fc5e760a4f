#include "hybridreg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "hybridreg/common.hpp"

namespace hybridreg {

double rmse(const std::vector<Point2>& points_a, const std::vector<Point2>& points_b) {
  if (points_a.size() != points_b.size())
    throw ArgumentError("rmse: point count mismatch");
  if (points_a.empty()) throw ArgumentError("rmse: empty point sets");
  double acc = 0.0;
  for (size_t i = 0; i < points_a.size(); ++i) {
    const double dx = points_a[i].x - points_b[i].x;
    const double dy = points_a[i].y - points_b[i].y;
    acc += dx * dx + dy * dy;
  }
  return std::sqrt(acc / points_a.size());
}

double auc(const std::vector<double>& rmse_list, int t_max) {
  if (rmse_list.empty()) throw ArgumentError("auc: empty RMSE list");
  double acc = 0.0;
  for (int t = 0; t <= t_max; ++t) {
    int ok = 0;
    for (double r : rmse_list)
      if (r <= t) ++ok;
    acc += static_cast<double>(ok) / rmse_list.size();
  }
  return acc / (t_max + 1);
}

GrayImage render_checkerboard(const GrayImage& fixed, const GrayImage& warped, int tile) {
  if (fixed.width() != warped.width() || fixed.height() != warped.height())
    throw ArgumentError("render_checkerboard: size mismatch");
  if (tile < 8) throw ArgumentError("render_checkerboard: tile must be >= 8");
  GrayImage out(fixed.width(), fixed.height());
  for (int y = 0; y < fixed.height(); ++y)
    for (int x = 0; x < fixed.width(); ++x) {
      const bool from_fixed = ((x / tile) + (y / tile)) % 2 == 0;
      out.at(x, y) = from_fixed ? fixed.at(x, y) : warped.at(x, y);
    }
  return out;
}

BatchResult summarize_batch(std::vector<PairResult> pairs, int t_max) {
  BatchResult b;
  b.pairs = std::move(pairs);
  b.threshold_max = t_max;
  std::vector<double> rmse_final, rmse_global;
  int accepted = 0, evaluated = 0;
  for (const PairResult& p : b.pairs) {
    if (!p.error.empty() || !p.has_metrics) continue;
    ++evaluated;
    rmse_final.push_back(p.rmse_final);
    rmse_global.push_back(p.rmse_global);
    if (p.accepted) ++accepted;
  }
  if (evaluated > 0) {
    b.accept_rate = static_cast<double>(accepted) / evaluated;
    b.auc_final = auc(rmse_final, t_max);
    b.auc_global = auc(rmse_global, t_max);
    double sf = 0.0, sg = 0.0;
    for (double r : rmse_final) sf += r;
    for (double r : rmse_global) sg += r;
    b.mean_rmse_final = sf / evaluated;
    b.mean_rmse_global = sg / evaluated;
  }
  return b;
}

void write_batch_json(const BatchResult& batch, const std::string& path) {
  nlohmann::json j;
  j["accept_rate"] = batch.accept_rate;
  j["auc_final"] = batch.auc_final;
  j["auc_global"] = batch.auc_global;
  j["mean_rmse_final"] = batch.mean_rmse_final;
  j["mean_rmse_global"] = batch.mean_rmse_global;
  j["threshold_grid"] = {0, batch.threshold_max, 1};
  auto& arr = j["pairs"] = nlohmann::json::array();
  for (const PairResult& p : batch.pairs) {
    nlohmann::json e;
    e["pair_id"] = p.pair_id;
    if (!p.error.empty()) {
      e["error"] = p.error;
    } else if (p.has_metrics) {
      e["rmse_global"] = p.rmse_global;
      e["rmse_final"] = p.rmse_final;
      e["accepted"] = p.accepted;
    }
    if (!p.category.empty()) e["category"] = p.category;
    arr.push_back(e);
  }
  std::ofstream out(path);
  if (!out) throw IoError("write_batch_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

void write_batch_csv(const BatchResult& batch, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_batch_csv: cannot open " + path);
  out << "pair_id,rmse_global,rmse_final,accepted,category,error\n";
  for (const PairResult& p : batch.pairs) {
    out << p.pair_id << ",";
    if (p.error.empty() && p.has_metrics)
      out << p.rmse_global << "," << p.rmse_final << "," << (p.accepted ? 1 : 0);
    else
      out << ",,";
    out << "," << p.category << "," << p.error << "\n";
  }
}

}  // namespace hybridreg
