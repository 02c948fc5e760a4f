#include "hybridreg/matching.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "hybridreg/common.hpp"
#include "filters.hpp"

namespace hybridreg {

namespace {

constexpr int kPatch = 16;
constexpr double kPatchHalf = kPatch / 2.0;  // border margin, spec: patch radius

struct Descriptor {
  std::vector<double> v;  // kPatch*kPatch, zero-mean unit-norm (or all-zero)
  int kp_index = -1;
};

// patch sampled bilinearly, centered at the keypoint's subpixel location
bool build_descriptor(const GrayImage& img, const Keypoint& kp, Descriptor& out) {
  if (kp.x < kPatchHalf || kp.y < kPatchHalf || kp.x > img.width() - 1 - kPatchHalf ||
      kp.y > img.height() - 1 - kPatchHalf)
    return false;
  out.v.resize(kPatch * kPatch);
  double mean = 0.0;
  for (int j = 0; j < kPatch; ++j)
    for (int i = 0; i < kPatch; ++i) {
      const double val = sample_bilinear(img, kp.x + (i - (kPatch - 1) / 2.0),
                                         kp.y + (j - (kPatch - 1) / 2.0));
      out.v[j * kPatch + i] = val;
      mean += val;
    }
  mean /= out.v.size();
  double ssq = 0.0;
  for (double& val : out.v) {
    val -= mean;
    ssq += val * val;
  }
  if (ssq / out.v.size() < 1e-12) {
    std::fill(out.v.begin(), out.v.end(), 0.0);
    return true;
  }
  const double inv = 1.0 / std::sqrt(ssq);
  for (double& val : out.v) val *= inv;
  return true;
}

double sq_dist(const Descriptor& a, const Descriptor& b) {
  double d = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    const double t = a.v[i] - b.v[i];
    d += t * t;
  }
  return d;
}

}  // namespace

std::vector<Keypoint> detect_harris(const GrayImage& img, int max_points, int nms_radius) {
  const int w = img.width(), h = img.height();
  if (w < 16 || h < 16) throw ArgumentError("detect_harris: image must be >= 16x16");

  std::vector<double> gx, gy;
  detail::sobel(img, gx, gy);
  std::vector<double> ixx(img.size()), iyy(img.size()), ixy(img.size());
  for (size_t i = 0; i < img.size(); ++i) {
    ixx[i] = gx[i] * gx[i];
    iyy[i] = gy[i] * gy[i];
    ixy[i] = gx[i] * gy[i];
  }
  const auto kernel = detail::gaussian_kernel(1.0);
  ixx = detail::blur_separable(ixx, w, h, kernel);
  iyy = detail::blur_separable(iyy, w, h, kernel);
  ixy = detail::blur_separable(ixy, w, h, kernel);

  constexpr double kHarrisK = 0.04;
  constexpr double kMinResponse = 1e-10;
  std::vector<double> response(img.size());
  for (size_t i = 0; i < img.size(); ++i) {
    const double det = ixx[i] * iyy[i] - ixy[i] * ixy[i];
    const double tr = ixx[i] + iyy[i];
    response[i] = det - kHarrisK * tr * tr;
  }

  std::vector<Keypoint> candidates;
  for (int y = 1; y < h - 1; ++y)
    for (int x = 1; x < w - 1; ++x) {
      const double r = response[static_cast<size_t>(y) * w + x];
      if (r <= kMinResponse) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (response[static_cast<size_t>(y + dy) * w + (x + dx)] > r) {
            is_max = false;
            break;
          }
        }
      if (is_max)
        candidates.push_back({static_cast<double>(x), static_cast<double>(y), r});
    }

  std::sort(candidates.begin(), candidates.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });

  // greedy NMS: accept strongest first, suppress anything within the radius
  std::vector<Keypoint> kept;
  for (const Keypoint& c : candidates) {
    bool ok = true;
    for (const Keypoint& k : kept) {
      if (std::max(std::abs(k.x - c.x), std::abs(k.y - c.y)) <= nms_radius) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    kept.push_back(c);
    if (static_cast<int>(kept.size()) >= max_points) break;
  }
  return kept;
}

MatchSet match_descriptors(const GrayImage& img_m, const GrayImage& img_f,
                           const std::vector<Keypoint>& kps_m,
                           const std::vector<Keypoint>& kps_f, double ratio) {
  std::vector<Descriptor> dm, df;
  for (size_t i = 0; i < kps_m.size(); ++i) {
    Descriptor d;
    if (build_descriptor(img_m, kps_m[i], d)) {
      d.kp_index = static_cast<int>(i);
      dm.push_back(std::move(d));
    }
  }
  for (size_t i = 0; i < kps_f.size(); ++i) {
    Descriptor d;
    if (build_descriptor(img_f, kps_f[i], d)) {
      d.kp_index = static_cast<int>(i);
      df.push_back(std::move(d));
    }
  }

  MatchSet ms;
  ms.source = MatchSource::kBuiltIn;
  if (dm.empty() || df.empty()) return ms;

  auto nearest = [](const Descriptor& q, const std::vector<Descriptor>& pool, int& best,
                    double& d1, double& d2) {
    best = -1;
    d1 = d2 = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < pool.size(); ++j) {
      const double d = sq_dist(q, pool[j]);
      if (d < d1) {
        d2 = d1;
        d1 = d;
        best = static_cast<int>(j);
      } else if (d < d2) {
        d2 = d;
      }
    }
  };

  // Lowe ratio applied in both directions keeps the result symmetric under
  // swapping the image roles; a single candidate passes trivially.
  std::vector<int> best_f_of_m(dm.size(), -1);
  for (size_t i = 0; i < dm.size(); ++i) {
    int best;
    double d1, d2;
    nearest(dm[i], df, best, d1, d2);
    if (best >= 0 && (df.size() < 2 || std::sqrt(d1) < ratio * std::sqrt(d2)))
      best_f_of_m[i] = best;
  }
  std::vector<int> best_m_of_f(df.size(), -1);
  for (size_t j = 0; j < df.size(); ++j) {
    int best;
    double d1, d2;
    nearest(df[j], dm, best, d1, d2);
    if (best >= 0 && (dm.size() < 2 || std::sqrt(d1) < ratio * std::sqrt(d2)))
      best_m_of_f[j] = best;
  }

  for (size_t i = 0; i < dm.size(); ++i) {
    const int j = best_f_of_m[i];
    if (j < 0 || best_m_of_f[j] != static_cast<int>(i)) continue;
    const Keypoint& km = kps_m[dm[i].kp_index];
    const Keypoint& kf = kps_f[df[j].kp_index];
    ms.pairs.push_back({{km.x, km.y}, {kf.x, kf.y}});
  }
  return ms;
}

MatchSet load_matches(const std::string& path, int image_w, int image_h) {
  std::ifstream in(path);
  if (!in) throw IoError("load_matches: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("load_matches: malformed JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("frame") || !j.contains("matches") ||
      !j["frame"].is_array() || j["frame"].size() != 2 || !j["matches"].is_array())
    throw FormatError("load_matches: expected {\"frame\":[w,h],\"matches\":[...]}");

  const double frame_w = j["frame"][0].get<double>();
  const double frame_h = j["frame"][1].get<double>();
  if (frame_w <= 0 || frame_h <= 0) throw FormatError("load_matches: invalid frame size");
  const double sx = image_w / frame_w, sy = image_h / frame_h;

  MatchSet ms;
  ms.source = MatchSource::kIngested;
  std::set<std::pair<double, double>> seen_m, seen_f;
  for (size_t i = 0; i < j["matches"].size(); ++i) {
    const auto& rec = j["matches"][i];
    if (!rec.is_array() || rec.size() != 4)
      throw FormatError("load_matches: record " + std::to_string(i) +
                        " must be [x_m,y_m,x_f,y_f]");
    double vals[4];
    for (int k = 0; k < 4; ++k) {
      if (!rec[k].is_number())
        throw FormatError("load_matches: record " + std::to_string(i) + " has non-number");
      vals[k] = rec[k].get<double>();
    }
    MatchPair p{{vals[0] * sx, vals[1] * sy}, {vals[2] * sx, vals[3] * sy}};
    auto inside = [&](const Point2& q) {
      return q.x >= 0.0 && q.y >= 0.0 && q.x < image_w && q.y < image_h;
    };
    if (!inside(p.moving) || !inside(p.fixed))
      throw ValidationError("load_matches: coordinate out of bounds at index " +
                            std::to_string(i));
    if (!seen_m.insert({p.moving.x, p.moving.y}).second ||
        !seen_f.insert({p.fixed.x, p.fixed.y}).second)
      throw ValidationError("load_matches: duplicate coordinate at index " +
                            std::to_string(i));
    ms.pairs.push_back(p);
  }
  return ms;
}

void save_matches(const MatchSet& ms, int frame_w, int frame_h, const std::string& path) {
  nlohmann::json j;
  j["frame"] = {frame_w, frame_h};
  auto& arr = j["matches"] = nlohmann::json::array();
  for (const MatchPair& p : ms.pairs)
    arr.push_back({p.moving.x, p.moving.y, p.fixed.x, p.fixed.y});
  std::ofstream out(path);
  if (!out) throw IoError("save_matches: cannot open " + path);
  out << j.dump(2) << "\n";
}

}  // namespace hybridreg
