#pragma once

#include <cmath>
#include <stdexcept>

#include "lpreg/types.hpp"

namespace lpreg {

inline constexpr double kDefaultThreshold = 0.01;

/// One point per pixel whose maximal label probability reaches the threshold,
/// in row-major order, carrying the pixel's K prior values.
inline PointSet extract_points(const LabelProbMap& map, double threshold = kDefaultThreshold) {
  if (!(threshold > 0.0) || !(threshold < 1.0))
    throw std::invalid_argument("extract_points: threshold must be in (0,1)");
  const std::size_t k = map.labels.size();
  PointSet out;
  out.width = map.width;
  out.height = map.height;
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      float best = 0.0f;
      for (std::size_t j = 0; j < k; ++j) best = std::max(best, map.at(x, y, j));
      if (best < threshold) continue;
      Point pt;
      pt.x = x;
      pt.y = y;
      pt.prior.resize(k);
      for (std::size_t j = 0; j < k; ++j) pt.prior[j] = map.at(x, y, j);
      out.points.push_back(std::move(pt));
    }
  }
  if (out.points.empty()) throw std::runtime_error("no facade evidence");
  return out;
}

/// Keeps points whose integer coordinates are multiples of the stride;
/// coordinates stay in the full-image frame. Falls back to the full set
/// (flagged) if the strided set would be empty.
inline PointSet downsample(const PointSet& ps, int stride, bool* fell_back = nullptr) {
  if (stride < 1) throw std::invalid_argument("downsample: stride must be >= 1");
  if (fell_back) *fell_back = false;
  if (stride == 1) return ps;
  PointSet out;
  out.width = ps.width;
  out.height = ps.height;
  for (const auto& pt : ps.points) {
    const long xi = std::lround(pt.x), yi = std::lround(pt.y);
    if (xi % stride == 0 && yi % stride == 0) out.points.push_back(pt);
  }
  if (out.points.empty()) {
    if (fell_back) *fell_back = true;
    return ps;
  }
  return out;
}

}  // namespace lpreg
