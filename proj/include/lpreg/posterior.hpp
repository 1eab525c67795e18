#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "lpreg/types.hpp"

namespace lpreg {

/// Per-point posterior over the K labels plus the outlier class.
struct PointPosterior {
  std::vector<double> label_probs;
  double outlier = 0.0;
};

/// Collapses responsibilities over the components of each label:
/// posterior_i(j) = sum_{k_j} beta, outlier_i = gamma_i. Sums to one per point.
inline std::vector<PointPosterior> posterior_labels(const PointSet& x,
                                                    const Responsibilities& resp,
                                                    const LpMixtureModel& model) {
  if (resp.n_points != x.size() || resp.n_components != model.size())
    throw std::invalid_argument("posterior_labels: responsibilities shape mismatch");
  const std::size_t k = model.labels.size();
  std::vector<PointPosterior> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i].label_probs.assign(k, 0.0);
    const double* row = &resp.beta[i * resp.n_components];
    for (std::size_t c = 0; c < resp.n_components; ++c)
      out[i].label_probs[model.components[c].label] += row[c];
    out[i].outlier = resp.gamma[i];
  }
  return out;
}

/// Writes the point posteriors back into a copy of the prior map. Pixels that
/// are points of X get their posterior label probabilities (the outlier mass
/// stays in the non-facade residual); all other pixels keep the prior values.
inline LabelProbMap render_posterior_map(const PointSet& x,
                                         const std::vector<PointPosterior>& posteriors,
                                         const LabelProbMap& prior_map) {
  if (posteriors.size() != x.size())
    throw std::invalid_argument("render_posterior_map: posterior count mismatch");
  if (prior_map.width != x.width || prior_map.height != x.height)
    throw std::invalid_argument("render_posterior_map: dimension mismatch");
  LabelProbMap out = prior_map;
  const std::size_t k = out.labels.size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const int px = int(std::lround(x.points[i].x));
    const int py = int(std::lround(x.points[i].y));
    if (px < 0 || px >= out.width || py < 0 || py >= out.height) continue;
    for (std::size_t j = 0; j < k; ++j)
      out.at(px, py, j) = float(posteriors[i].label_probs[j]);
  }
  return out;
}

}  // namespace lpreg
