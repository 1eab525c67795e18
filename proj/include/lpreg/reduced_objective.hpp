#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "lpreg/density.hpp"
#include "lpreg/objective.hpp"
#include "lpreg/types.hpp"

namespace lpreg {

/// Gaussian-equivalent spread for the p=2 closed-form solve: the p=2 component
/// with the same per-axis variance as the Lp component with spread sigma.
inline double p2_equivalent_sigma(double sigma, int p) {
  if (p == 2) return sigma;
  return 2.0 * std::pow(sigma, 2.0 / p) * std::tgamma(3.0 / p) / std::tgamma(1.0 / p);
}

/// Moment coefficients a1..a8 of the Gaussian closed-form pose solve (data and
/// center sums weighted by beta over Gaussian-equivalent spreads), plus the
/// total responsibility mass.
struct ClosedFormCoefficients {
  double a1 = 0, a2 = 0, a3 = 0, a4 = 0, a5 = 0, a6 = 0, a7 = 0, a8 = 0;
  double beta_total = 0;
};

inline ClosedFormCoefficients closed_form_coefficients(const PointSet& x,
                                                  const LpMixtureModel& model,
                                                  const Responsibilities& resp) {
  ClosedFormCoefficients a;
  const std::size_t m = model.size();
  std::vector<double> isx(m), isy(m);
  for (std::size_t c = 0; c < m; ++c) {
    isx[c] = 1.0 / p2_equivalent_sigma(model.components[c].sxx, model.p);
    isy[c] = 1.0 / p2_equivalent_sigma(model.components[c].syy, model.p);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double px = x.points[i].x, py = x.points[i].y;
    const double* row = &resp.beta[i * m];
    for (std::size_t c = 0; c < m; ++c) {
      const double b = row[c];
      if (b == 0.0) continue;
      const double wx = b * isx[c], wy = b * isy[c];
      const double mx = model.components[c].mu.x, my = model.components[c].mu.y;
      a.a1 -= wx * px * px + wy * py * py;
      a.a2 += wx * px * mx + wy * py * my;
      a.a3 += 2.0 * wx * px;
      a.a4 += 2.0 * wy * py;
      a.a5 -= wx * mx;
      a.a6 -= wy * my;
      a.a7 -= wx;
      a.a8 -= wy;
      a.beta_total += b;
    }
  }
  return a;
}

/// Reduced M-step objective over the pose for fixed responsibilities:
///   Rt(theta) = sum_ic beta_ic [ln pi_c + ln prior_i + ln N_p(X_i | T mu_c, s^p Sigma_c)]
///             + sum_i gamma_i ln(alpha/HW) + sum_c (dirichlet_c - 1) ln pi_c
/// The pose-dependent part is -sum beta ||X - T mu||^p_{p, s^p Sigma} - 2 (sum beta) ln s.
///
/// Construction performs the single O(N*M) pass; value/gradient/hessian are then
/// O(1) polynomial evaluations from moment tables centered at a reference pose
/// (center close to the evaluation pose keeps the expansion well conditioned).
class ReducedObjective {
 public:
  ReducedObjective(const PointSet& x, const LpMixtureModel& model,
                   const Responsibilities& resp, const TransformState& state,
                   const Similarity& center)
      : p_(model.p), center_(center) {
    if (resp.n_points != x.size() || resp.n_components != model.size())
      throw std::invalid_argument("ReducedObjective: responsibilities shape mismatch");
    const std::size_t m = model.size();
    const double lambda = state.alpha / (double(x.width) * double(x.height));
    const double log_lambda = lambda > 0.0 ? std::log(lambda) : -745.0;
    std::vector<double> log_w(m), mux(m), muy(m), isx(m), isy(m);
    const double g = std::tgamma(1.0 / p_);
    const double ln_z_base = std::log(4.0 / (double(p_) * p_) * g * g);
    for (std::size_t c = 0; c < m; ++c) {
      const auto& k = model.components[c];
      mux[c] = k.mu.x;
      muy[c] = k.mu.y;
      isx[c] = 1.0 / k.sxx;
      isy[c] = 1.0 / k.syy;
      log_w[c] = detail::safe_log(state.weights[c]) - ln_z_base -
                 std::log(k.sxx * k.syy) / p_;
    }
    for (auto& row : ax_) row.fill(0.0);
    for (auto& row : ay_) row.fill(0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const auto& pt = x.points[i];
      const double* row = &resp.beta[i * m];
      for (std::size_t c = 0; c < m; ++c) {
        const double b = row[c];
        if (b == 0.0) continue;
        const double u0 = pt.x - center.s * mux[c] - center.tx;
        const double v0 = pt.y - center.s * muy[c] - center.ty;
        const double wx = b * isx[c], wy = b * isy[c];
        double upow = wx, vpow = wy;
        std::array<double, 5> ux{}, vy{};
        for (int a = 0; a <= p_; ++a) {
          ux[a] = upow;
          vy[a] = vpow;
          upow *= u0;
          vpow *= v0;
        }  // ux[a] = wx * u0^a
        double mxp = 1.0, myp = 1.0;
        for (int bb = 0; bb <= p_; ++bb) {
          for (int aa = 0; aa + bb <= p_; ++aa) {
            ax_[aa][bb] += ux[aa] * mxp;
            ay_[aa][bb] += vy[aa] * myp;
          }
          mxp *= mux[c];
          myp *= muy[c];
        }
        beta_total_ += b;
        const double prior = pt.prior[model.components[c].label];
        const_terms_ += b * (log_w[c] + (prior > 0.0 ? std::log(prior) : -745.0));
      }
      const_terms_ += resp.gamma[i] * log_lambda;
    }
    for (std::size_t c = 0; c < m; ++c)
      const_terms_ += (model.dirichlet[c] - 1.0) * detail::safe_log(state.weights[c]);
  }

  double value(const Similarity& t) const {
    const double sp = detail::ipow(t.s, p_);
    const double norm = poly(ax_, p_, 0, t.tx - center_.tx, t.s - center_.s) +
                        poly(ay_, p_, 0, t.ty - center_.ty, t.s - center_.s);
    return const_terms_ - 2.0 * beta_total_ * std::log(t.s) - norm / sp;
  }

  detail::Vec3 gradient(const Similarity& t) const {
    const double dtx = t.tx - center_.tx, dty = t.ty - center_.ty, ds = t.s - center_.s;
    const double sp = detail::ipow(t.s, p_);
    const double pd = double(p_);
    detail::Vec3 g;
    g[0] = pd * poly(ax_, p_ - 1, 0, dtx, ds) / sp;
    g[1] = pd * poly(ay_, p_ - 1, 0, dty, ds) / sp;
    g[2] = -2.0 * beta_total_ / t.s +
           pd * (poly(ax_, p_ - 1, 1, dtx, ds) + poly(ay_, p_ - 1, 1, dty, ds)) / sp +
           pd * (poly(ax_, p_, 0, dtx, ds) + poly(ay_, p_, 0, dty, ds)) / (sp * t.s);
    return g;
  }

  detail::Mat3 hessian(const Similarity& t) const {
    const double dtx = t.tx - center_.tx, dty = t.ty - center_.ty, ds = t.s - center_.s;
    const double sp = detail::ipow(t.s, p_);
    const double pd = double(p_);
    const double pp1 = pd * (pd - 1.0);
    detail::Mat3 h{};
    h[0][0] = -pp1 * poly(ax_, p_ - 2, 0, dtx, ds) / sp;
    h[1][1] = -pp1 * poly(ay_, p_ - 2, 0, dty, ds) / sp;
    h[0][2] = -pp1 * poly(ax_, p_ - 2, 1, dtx, ds) / sp -
              pd * pd * poly(ax_, p_ - 1, 0, dtx, ds) / (sp * t.s);
    h[1][2] = -pp1 * poly(ay_, p_ - 2, 1, dty, ds) / sp -
              pd * pd * poly(ay_, p_ - 1, 0, dty, ds) / (sp * t.s);
    h[2][2] = 2.0 * beta_total_ / (t.s * t.s) -
              pp1 * (poly(ax_, p_ - 2, 2, dtx, ds) + poly(ay_, p_ - 2, 2, dty, ds)) / sp -
              2.0 * pd * pd *
                  (poly(ax_, p_ - 1, 1, dtx, ds) + poly(ay_, p_ - 1, 1, dty, ds)) /
                  (sp * t.s) -
              pd * (pd + 1.0) * (poly(ax_, p_, 0, dtx, ds) + poly(ay_, p_, 0, dty, ds)) /
                  (sp * t.s * t.s);
    h[2][0] = h[0][2];
    h[2][1] = h[1][2];
    return h;
  }

  double beta_total() const { return beta_total_; }
  const Similarity& center() const { return center_; }

 private:
  using Table = std::array<std::array<double, 5>, 5>;  // [u0 power][mu power]

  // sum_ic beta u^r mu^j / sigma at displacement (dt, ds) from the center,
  // via u = u0 - ds*mu - dt and the binomial expansion over the moment table.
  double poly(const Table& a, int r, int j, double dt, double ds) const {
    static constexpr double kBinom[5][5] = {{1, 0, 0, 0, 0},
                                            {1, 1, 0, 0, 0},
                                            {1, 2, 1, 0, 0},
                                            {1, 3, 3, 1, 0},
                                            {1, 4, 6, 4, 1}};
    double dtp[5], dsp[5];
    dtp[0] = dsp[0] = 1.0;
    for (int i = 1; i <= r; ++i) {
      dtp[i] = dtp[i - 1] * dt;
      dsp[i] = dsp[i - 1] * ds;
    }
    double acc = 0.0;
    for (int k = 0; k <= r; ++k) {
      const double sgn = (k % 2) ? -1.0 : 1.0;
      double inner = 0.0;
      for (int mm = 0; mm <= k; ++mm)
        inner += kBinom[k][mm] * dsp[mm] * dtp[k - mm] * a[r - k][mm + j];
      acc += sgn * kBinom[r][k] * inner;
    }
    return acc;
  }

  int p_;
  Similarity center_;
  Table ax_{}, ay_{};
  double beta_total_ = 0.0;
  double const_terms_ = 0.0;
};

}  // namespace lpreg
