#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lpreg/objective.hpp"
#include "lpreg/reference_fit.hpp"
#include "lpreg/types.hpp"

namespace lpreg {

namespace detail {

// Deterministic uniform helpers on top of mt19937_64; std::uniform_*_distribution
// is implementation-defined, these keep synthetic instances bit-stable.
inline double next_unit(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}
inline double next_uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * next_unit(rng);
}
inline long next_int(std::mt19937_64& rng, long lo, long hi) {  // inclusive
  return lo + long(next_unit(rng) * double(hi - lo + 1));
}

}  // namespace detail

/// Rows x cols of identical cells for one label, anchored at (x0, y0) with the
/// given pitch.
struct GridSpec {
  int label = 0;
  int rows = 1;
  int cols = 1;
  int cell_w = 10;
  int cell_h = 10;
  int x0 = 0;
  int y0 = 0;
  int pitch_x = 0;
  int pitch_y = 0;
};

/// Procedural facade instance description. A fixed seed reproduces the instance
/// bit-for-bit.
struct SynthSpec {
  int ref_width = 150;
  int ref_height = 196;
  int target_width = 400;
  int target_height = 470;
  LabelSet labels;
  std::vector<GridSpec> grids;
  double tx = 0.0, ty = 0.0, s = 1.0;  // true transform
  double prior_true = 0.8;
  double label_noise = 0.0;  // per-pixel label confusion probability
  double swap_hi = 0.55, swap_lo = 0.35;
  double bg_noise = 0.0;     // sub-threshold background prior probability
  int clutter_points = 0;
  std::vector<RectD> occlusions;  // target frame
  int swap_label = -1, swap_index = -1;  // full-component label swap (criterion-8 style)
  std::uint64_t seed = 0;
};

struct SynthTruth {
  double tx = 0.0, ty = 0.0, s = 1.0;
  std::vector<std::int16_t> true_labels;  // target H*W, -1 = not a facade pixel
};

struct SynthInstance {
  ReferenceSegmentation reference;
  LabelProbMap target;
  SynthTruth truth;
};

/// Builds the reference mask of axis-aligned rectangles and the target prior map
/// under the true transform, with label-confusion noise, occlusions and clutter.
/// Throws if rectangles of the same label overlap.
inline SynthInstance generate_instance(const SynthSpec& spec) {
  spec.labels.validate();
  const std::size_t k = spec.labels.size();
  SynthInstance out;
  out.reference.width = spec.ref_width;
  out.reference.height = spec.ref_height;
  out.reference.labels = spec.labels;
  out.reference.mask.assign(std::size_t(spec.ref_width) * spec.ref_height, 0);

  struct CompRect {
    int label, x0, y0, w, h, index_in_label;
  };
  std::vector<CompRect> rects;
  std::vector<int> per_label_count(k, 0);
  for (const auto& g : spec.grids) {
    if (g.label < 0 || std::size_t(g.label) >= k)
      throw std::invalid_argument("generate_instance: grid label out of range");
    for (int r = 0; r < g.rows; ++r)
      for (int c = 0; c < g.cols; ++c)
        rects.push_back({g.label, g.x0 + c * g.pitch_x, g.y0 + r * g.pitch_y, g.cell_w,
                         g.cell_h, per_label_count[g.label]++});
  }
  if (rects.empty()) throw std::invalid_argument("generate_instance: no components");
  {
    // the true transform must keep at least 25% of the facade in frame
    const double xa = spec.s * 0.0 + spec.tx, xb = spec.s * spec.ref_width + spec.tx;
    const double ya = spec.s * 0.0 + spec.ty, yb = spec.s * spec.ref_height + spec.ty;
    const double ix = std::max(0.0, std::min(xb, double(spec.target_width)) - std::max(xa, 0.0));
    const double iy = std::max(0.0, std::min(yb, double(spec.target_height)) - std::max(ya, 0.0));
    if (ix * iy < 0.25 * (xb - xa) * (yb - ya))
      throw std::invalid_argument("generate_instance: facade less than 25% inside the frame");
  }
  for (const auto& rc : rects) {
    if (rc.x0 < 0 || rc.y0 < 0 || rc.x0 + rc.w > spec.ref_width ||
        rc.y0 + rc.h > spec.ref_height)
      throw std::invalid_argument("generate_instance: component outside reference frame");
    for (int y = rc.y0; y < rc.y0 + rc.h; ++y)
      for (int x = rc.x0; x < rc.x0 + rc.w; ++x) {
        auto& cell = out.reference.mask[std::size_t(y) * spec.ref_width + x];
        if (cell != 0 && cell == std::uint8_t(rc.label + 1))
          throw std::invalid_argument("generate_instance: overlapping components in a label");
        cell = std::uint8_t(rc.label + 1);
      }
  }

  out.target.width = spec.target_width;
  out.target.height = spec.target_height;
  out.target.labels = spec.labels;
  out.target.planes.assign(std::size_t(spec.target_width) * spec.target_height * k, 0.0f);
  out.truth.tx = spec.tx;
  out.truth.ty = spec.ty;
  out.truth.s = spec.s;
  out.truth.true_labels.assign(std::size_t(spec.target_width) * spec.target_height, -1);

  std::mt19937_64 rng(spec.seed);
  const auto pixel_index = [&spec](int x, int y) {
    return std::size_t(y) * spec.target_width + x;
  };

  for (const auto& rc : rects) {
    const bool swapped =
        rc.label == spec.swap_label && rc.index_in_label == spec.swap_index;
    // pixel-center convention: reference pixel x0..x0+w-1 occupies
    // [x0-0.5, x0+w-0.5); a target pixel belongs to the component when its
    // center falls inside the transformed span
    const double xa = spec.s * (rc.x0 - 0.5) + spec.tx;
    const double xb = spec.s * (rc.x0 + rc.w - 0.5) + spec.tx;
    const double ya = spec.s * (rc.y0 - 0.5) + spec.ty;
    const double yb = spec.s * (rc.y0 + rc.h - 0.5) + spec.ty;
    for (int py = int(std::ceil(ya)); py < yb; ++py) {
      for (int px = int(std::ceil(xa)); px < xb; ++px) {
        if (px < 0 || px >= spec.target_width || py < 0 || py >= spec.target_height)
          continue;
        out.truth.true_labels[pixel_index(px, py)] = std::int16_t(rc.label);
        std::size_t assigned = rc.label;
        double p_assigned = spec.prior_true;
        double p_true_residual = -1.0;
        if (swapped && k > 1) {
          assigned = (rc.label + 1) % k;
          p_assigned = spec.swap_hi;
          p_true_residual = spec.swap_lo;
        } else if (spec.label_noise > 0.0 && detail::next_unit(rng) < spec.label_noise &&
                   k > 1) {
          assigned = (std::size_t(rc.label) + std::size_t(detail::next_int(rng, 1, long(k) - 1))) % k;
          p_assigned = spec.swap_hi;
          p_true_residual = spec.swap_lo;
        }
        for (std::size_t j = 0; j < k; ++j) out.target.at(px, py, j) = 0.0f;
        out.target.at(px, py, assigned) = float(p_assigned);
        if (p_true_residual > 0.0)
          out.target.at(px, py, std::size_t(rc.label)) = float(p_true_residual);
      }
    }
  }

  if (spec.bg_noise > 0.0) {
    for (int py = 0; py < spec.target_height; ++py)
      for (int px = 0; px < spec.target_width; ++px) {
        if (out.truth.true_labels[pixel_index(px, py)] >= 0) continue;
        if (detail::next_unit(rng) < spec.bg_noise) {
          const auto j = std::size_t(detail::next_int(rng, 0, long(k) - 1));
          out.target.at(px, py, j) = float(detail::next_uniform(rng, 0.0, 0.009));
        }
      }
  }

  for (int i = 0; i < spec.clutter_points; ++i) {
    const int px = int(detail::next_int(rng, 0, spec.target_width - 1));
    const int py = int(detail::next_int(rng, 0, spec.target_height - 1));
    const auto j = std::size_t(detail::next_int(rng, 0, long(k) - 1));
    for (std::size_t jj = 0; jj < k; ++jj) out.target.at(px, py, jj) = 0.0f;
    out.target.at(px, py, j) = float(detail::next_uniform(rng, 0.3, 0.9));
    out.truth.true_labels[pixel_index(px, py)] = -1;
  }

  for (const auto& oc : spec.occlusions) {
    for (int py = std::max(0, int(std::floor(oc.y)));
         py < std::min(spec.target_height, int(std::ceil(oc.y + oc.h))); ++py)
      for (int px = std::max(0, int(std::floor(oc.x)));
           px < std::min(spec.target_width, int(std::ceil(oc.x + oc.w))); ++px) {
        for (std::size_t j = 0; j < k; ++j) out.target.at(px, py, j) = 0.0f;
        out.truth.true_labels[pixel_index(px, py)] = -1;
      }
  }
  return out;
}

/// 2D registration error: translation distance in pixels, relative scale error.
struct RegError {
  double dt = 0.0;
  double ds = 0.0;
};

inline RegError registration_error(const Similarity& estimate, const Similarity& truth) {
  return {std::hypot(estimate.tx - truth.tx, estimate.ty - truth.ty),
          std::abs(estimate.s - truth.s) / truth.s};
}

struct HistogramRow {
  std::string metric;  // "dt" or "ds"
  double threshold = 0.0;
  double fraction = 0.0;
};

/// Cumulative normalized histogram: fraction of runs with error <= threshold,
/// per metric; monotone non-decreasing in the threshold by construction.
inline std::vector<HistogramRow> evaluate(const std::vector<RegError>& results,
                                          const std::vector<double>& dt_thresholds,
                                          const std::vector<double>& ds_thresholds) {
  if (results.empty()) throw std::invalid_argument("evaluate: no results");
  std::vector<HistogramRow> rows;
  const double n = double(results.size());
  for (double t : dt_thresholds) {
    std::size_t c = 0;
    for (const auto& r : results) c += r.dt <= t;
    rows.push_back({"dt", t, double(c) / n});
  }
  for (double t : ds_thresholds) {
    std::size_t c = 0;
    for (const auto& r : results) c += r.ds <= t;
    rows.push_back({"ds", t, double(c) / n});
  }
  return rows;
}

struct GridRanges {
  double tx_lo = -40, tx_hi = 40, tx_step = 0.5;
  double ty_lo = -40, ty_hi = 40, ty_step = 0.5;
  double s_lo = 0.6, s_hi = 1.6, s_step = 0.01;
};

struct GridResult {
  Similarity pose;
  double value = 0.0;
};

/// Exhaustive grid argmax of an arbitrary objective over (tx, ty, s), followed
/// by a coordinate-descent polish with shrinking steps.
template <class F>
GridResult grid_search(F&& f, const GridRanges& ranges) {
  GridResult best;
  best.value = -std::numeric_limits<double>::infinity();
  for (double s = ranges.s_lo; s <= ranges.s_hi + 1e-12; s += ranges.s_step)
    for (double tx = ranges.tx_lo; tx <= ranges.tx_hi + 1e-12; tx += ranges.tx_step)
      for (double ty = ranges.ty_lo; ty <= ranges.ty_hi + 1e-12; ty += ranges.ty_step) {
        const double v = f(Similarity{tx, ty, s});
        if (v > best.value) best = {{tx, ty, s}, v};
      }
  // pattern-search polish: axis and diagonal probes, shrinking on failure
  double step_t = ranges.tx_step, step_s = ranges.s_step;
  for (int round = 0; round < 400 && (step_t > 1e-5 || step_s > 1e-7); ++round) {
    bool improved = false;
    const auto try_move = [&](double dtx, double dty, double ds) {
      Similarity cand{best.pose.tx + dtx, best.pose.ty + dty, best.pose.s + ds};
      if (!(cand.s > 0.0)) return;
      const double v = f(cand);
      if (v > best.value) {
        best = {cand, v};
        improved = true;
      }
    };
    for (int sx = -1; sx <= 1; ++sx)
      for (int sy = -1; sy <= 1; ++sy)
        for (int ss = -1; ss <= 1; ++ss) {
          if (sx == 0 && sy == 0 && ss == 0) continue;
          try_move(sx * step_t, sy * step_t, ss * step_s);
        }
    if (!improved) {
      step_t *= 0.5;
      step_s *= 0.5;
    }
  }
  return best;
}

/// Exhaustive maximizer of the MAP objective over the transform grid, with the
/// mixture weights and outlier rate held fixed. Reference answer for EM outputs
/// on small instances.
inline GridResult grid_oracle(const PointSet& x, const LpMixtureModel& model,
                              const std::vector<double>& weights, double alpha,
                              const GridRanges& ranges) {
  TransformState state;
  state.weights = weights;
  state.alpha = alpha;
  return grid_search(
      [&](const Similarity& pose) {
        TransformState st = state;
        st.pose = pose;
        return map_objective(x, model, st);
      },
      ranges);
}

}  // namespace lpreg
