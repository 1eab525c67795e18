#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "lpreg/detail/small_linalg.hpp"
#include "lpreg/transform.hpp"
#include "lpreg/types.hpp"

namespace lpreg {

/// ||d||_{p, s^p Sigma}^p = dx^p / (s^p sxx) + dy^p / (s^p syy), p even.
inline double lp_norm_term(Vec2 d, double sxx, double syy, double s, int p) {
  if (!std::isfinite(d.x) || !std::isfinite(d.y) || !std::isfinite(sxx) ||
      !std::isfinite(syy) || !std::isfinite(s))
    throw std::invalid_argument("lp_norm_term: non-finite input");
  const double sp = detail::ipow(s, p);
  return detail::ipow(d.x, p) / (sp * sxx) + detail::ipow(d.y, p) / (sp * syy);
}

/// Exact integral of exp(-lp_norm_term) over the plane:
///   Z = (4/p^2) Gamma(1/p)^2 s^2 (sxx*syy)^{1/p}
inline double normalization_constant(double sxx, double syy, double s, int p) {
  const double g = std::tgamma(1.0 / p);
  return 4.0 / (double(p) * p) * g * g * s * s * std::pow(sxx * syy, 1.0 / p);
}

/// N_p(x | T mu, s^p Sigma): maximal at the transformed center, integrates to 1.
inline double component_density(Vec2 x, const LpComponent& c, const Similarity& pose, int p) {
  const Vec2 tmu = apply_transform(c.mu, pose);
  const double e = lp_norm_term({x.x - tmu.x, x.y - tmu.y}, c.sxx, c.syy, pose.s, p);
  return std::exp(-e) / normalization_constant(c.sxx, c.syy, pose.s, p);
}

inline double component_density(Vec2 x, const LpComponent& c, const TransformState& state,
                                int p) {
  return component_density(x, c, state.pose, p);
}

namespace detail {

// Per-component constants hoisted out of the inner E-step / objective loops.
struct PreparedComponent {
  double tmux, tmuy;     // transformed center
  double inv_sx, inv_sy; // 1 / (s^p sigma)
  double inv_z;          // 1 / normalization constant
  double weight;
  int label;
};

inline std::vector<PreparedComponent> prepare_components(const LpMixtureModel& model,
                                                         const TransformState& state) {
  std::vector<PreparedComponent> out(model.components.size());
  const double sp = ipow(state.pose.s, model.p);
  for (std::size_t c = 0; c < model.components.size(); ++c) {
    const auto& k = model.components[c];
    const Vec2 tmu = apply_transform(k.mu, state.pose);
    out[c].tmux = tmu.x;
    out[c].tmuy = tmu.y;
    out[c].inv_sx = 1.0 / (sp * k.sxx);
    out[c].inv_sy = 1.0 / (sp * k.syy);
    out[c].inv_z = 1.0 / normalization_constant(k.sxx, k.syy, state.pose.s, model.p);
    out[c].weight = state.weights[c];
    out[c].label = k.label;
  }
  return out;
}

// exp(-e) underflows to zero past this; skipping the call keeps results exact.
inline constexpr double kExpCutoff = 800.0;

inline double pow_even(double u, int p) {
  const double u2 = u * u;
  return p == 2 ? u2 : (p == 4 ? u2 * u2 : ipow(u, p));
}

}  // namespace detail

}  // namespace lpreg
