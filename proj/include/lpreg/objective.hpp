#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "lpreg/density.hpp"
#include "lpreg/types.hpp"

namespace lpreg {

namespace detail {

inline double safe_log(double v) { return std::log(std::max(v, 1e-300)); }

// ln sum_i exp(t_i) for the rare all-underflow pixels.
inline double log_sum_exp(const std::vector<double>& terms) {
  double m = -std::numeric_limits<double>::infinity();
  for (double t : terms) m = std::max(m, t);
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - m);
  return m + std::log(acc);
}

}  // namespace detail

/// MAP objective R of Eq-style form:
///   sum_i ln[ sum_c pi_c N_p(X_i | T mu_c, s^p Sigma_c) prior_i(label_c) + alpha/(HW) ]
///   + sum_c (dirichlet_c - 1) ln pi_c
/// Always finite: pixels whose mixture+outlier mass underflows contribute the
/// log of the smallest normal double.
inline double map_objective(const PointSet& x, const LpMixtureModel& model,
                            const TransformState& state) {
  if (x.points.empty()) throw std::invalid_argument("map_objective: empty point set");
  const auto comps = detail::prepare_components(model, state);
  const double lambda = state.alpha / (double(x.width) * double(x.height));
  double r = 0.0;
  std::vector<double> log_terms;
  for (const auto& pt : x.points) {
    double d = lambda;
    for (const auto& k : comps) {
      const double prior = pt.prior[k.label];
      if (prior <= 0.0 || k.weight <= 0.0) continue;
      const double ux = pt.x - k.tmux;
      const double uy = pt.y - k.tmuy;
      const double e = detail::pow_even(ux, model.p) * k.inv_sx +
                       detail::pow_even(uy, model.p) * k.inv_sy;
      if (e >= detail::kExpCutoff) continue;
      d += k.weight * prior * k.inv_z * std::exp(-e);
    }
    if (d >= 1e-290) {
      r += std::log(d);
      continue;
    }
    // log-sum-exp stabilization for deeply underflowed pixels
    log_terms.clear();
    if (lambda > 0.0) log_terms.push_back(std::log(lambda));
    for (const auto& k : comps) {
      const double prior = pt.prior[k.label];
      if (prior <= 0.0 || k.weight <= 0.0) continue;
      const double ux = pt.x - k.tmux;
      const double uy = pt.y - k.tmuy;
      const double e = detail::pow_even(ux, model.p) * k.inv_sx +
                       detail::pow_even(uy, model.p) * k.inv_sy;
      log_terms.push_back(std::log(k.weight * prior * k.inv_z) - e);
    }
    const double ld = detail::log_sum_exp(log_terms);
    r += std::isfinite(ld)
             ? ld
             : std::log(std::numeric_limits<double>::min());
  }
  for (std::size_t c = 0; c < model.size(); ++c)
    r += (model.dirichlet[c] - 1.0) * detail::safe_log(state.weights[c]);
  return r;
}

}  // namespace lpreg
