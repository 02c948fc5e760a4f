#pragma once

#include <string>
#include <vector>

#include "hybridreg/geometry.hpp"
#include "hybridreg/raster.hpp"

namespace hybridreg {

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;

  Point2 pos() const { return {x, y}; }
};

enum class MatchSource { kBuiltIn, kIngested };

struct MatchPair {
  Point2 moving;
  Point2 fixed;
};

struct MatchSet {
  std::vector<MatchPair> pairs;
  MatchSource source = MatchSource::kBuiltIn;

  size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }
};

// Harris corner response (k=0.04, 3x3 Sobel, Gaussian window sigma=1),
// greedy NMS within nms_radius (Chebyshev), top max_points by score.
std::vector<Keypoint> detect_harris(const GrayImage& img, int max_points,
                                    int nms_radius);

// Zero-mean unit-norm 16x16 patch descriptors, nearest neighbor with Lowe
// ratio test and mutual-nearest check. Keypoints too close to the border
// for a full patch are dropped.
MatchSet match_descriptors(const GrayImage& img_m, const GrayImage& img_f,
                           const std::vector<Keypoint>& kps_m,
                           const std::vector<Keypoint>& kps_f,
                           double ratio = 0.9);

// JSON match file: {"frame": [w,h], "matches": [[x_m,y_m,x_f,y_f], ...]}.
// Coordinates rescale from the stated frame to image_size.
MatchSet load_matches(const std::string& path, int image_w, int image_h);

void save_matches(const MatchSet& ms, int frame_w, int frame_h,
                  const std::string& path);

}  // namespace hybridreg
