#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lpreg/density.hpp"
#include "lpreg/objective.hpp"
#include "lpreg/point_extraction.hpp"
#include "lpreg/reduced_objective.hpp"
#include "lpreg/types.hpp"

namespace lpreg {

struct EmConfig {
  int p = 4;
  double epsilon = 0.1;   // convergence: max(|dtx|,|dty|,|ds|*max(ref_w,ref_h)) <= epsilon
  int max_iters = 100;
  int stride = 2;         // coarse-level stride; 1 disables the coarse level
  double alpha_min = 0.01;
  double alpha_max = 0.9;
  double threshold = 0.01;  // point extraction threshold (used by callers)
  int gn_max_iters = 20;
};

/// Least-squares similarity mapping the reference corners (0,0),(w,0),(0,h),(w,h)
/// onto the detection box corners:
///   s = (w*box_w + h*box_h) / (w^2 + h^2),  t = box_center - s*(w/2, h/2)
inline Similarity init_from_box(const RectD& box, int ref_w, int ref_h) {
  if (!(box.w > 0.0) || !(box.h > 0.0))
    throw std::invalid_argument("init_from_box: box must have positive size");
  const double w = ref_w, h = ref_h;
  const double s = (w * box.w + h * box.h) / (w * w + h * h);
  if (!(s > 0.0)) throw std::runtime_error("degenerate detection");
  return {box.x + box.w / 2.0 - s * w / 2.0, box.y + box.h / 2.0 - s * h / 2.0, s};
}

/// alpha = clamp(0.25 (1 - s^2 h w / (H W)), alpha_min, alpha_max)
inline double init_outlier_rate(double s, int ref_w, int ref_h, int target_w, int target_h,
                                double alpha_min = 0.01, double alpha_max = 0.9) {
  const double raw =
      0.25 * (1.0 - s * s * double(ref_h) * ref_w / (double(target_h) * target_w));
  return std::clamp(raw, alpha_min, alpha_max);
}

/// E-step: beta_{i,c} = pi_c N_p(X_i) prior_i(label_c) / D_i, gamma_i = lambda / D_i,
/// D_i = sum_c pi_c N_p prior + lambda. Rows always sum to one; a point with zero
/// total mass becomes a pure outlier (gamma = 1).
inline Responsibilities e_step(const PointSet& x, const LpMixtureModel& model,
                               const TransformState& state,
                               std::size_t* degenerate_points = nullptr) {
  const std::size_t n = x.size(), m = model.size();
  Responsibilities resp;
  resp.n_points = n;
  resp.n_components = m;
  resp.beta.assign(n * m, 0.0);
  resp.gamma.assign(n, 0.0);
  const auto comps = detail::prepare_components(model, state);
  const double lambda = state.alpha / (double(x.width) * double(x.height));
  std::size_t degenerate = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& pt = x.points[i];
    double* row = &resp.beta[i * m];
    double d = lambda;
    for (std::size_t c = 0; c < m; ++c) {
      const auto& k = comps[c];
      const double prior = pt.prior[k.label];
      if (prior <= 0.0 || k.weight <= 0.0) continue;
      const double ux = pt.x - k.tmux;
      const double uy = pt.y - k.tmuy;
      const double e = detail::pow_even(ux, model.p) * k.inv_sx +
                       detail::pow_even(uy, model.p) * k.inv_sy;
      if (e >= detail::kExpCutoff) continue;
      const double w = k.weight * prior * k.inv_z * std::exp(-e);
      row[c] = w;
      d += w;
    }
    if (d > 0.0) {
      const double inv_d = 1.0 / d;
      for (std::size_t c = 0; c < m; ++c) row[c] *= inv_d;
      resp.gamma[i] = lambda * inv_d;
    } else {
      resp.gamma[i] = 1.0;
      ++degenerate;
    }
  }
  if (degenerate_points) *degenerate_points = degenerate;
  return resp;
}

enum class MStepStatus { ok, fixed_s, kept_pose };

struct MStepResult {
  Similarity pose;
  MStepStatus status = MStepStatus::ok;
};

/// Closed-form pose update for the Gaussian (p=2) reduced objective. With the
/// moment coefficients a1..a8, stationarity of Rt in s is the quadratic
///   (sum beta) s^2 + qb s + qc = 0,
/// qb = a2 - a3 a5/(2 a7) - a4 a6/(2 a8), qc = a1 - a3^2/(4 a7) - a4^2/(4 a8);
/// t follows from the linear equations tx = -(a3 + 2 a5 s)/(2 a7),
/// ty = -(a4 + 2 a6 s)/(2 a8). For p=4 models the coefficients are built on
/// variance-equivalent Gaussian spreads and the result seeds the Gauss-Newton
/// refinement.
inline MStepResult m_step_closed_form_p2(const PointSet& x, const LpMixtureModel& model,
                                         const Responsibilities& resp,
                                         const Similarity& previous) {
  const auto a = closed_form_coefficients(x, model, resp);
  MStepResult res;
  res.pose = previous;
  if (!(a.beta_total > 1e-12) || std::abs(a.a7) < 1e-300 || std::abs(a.a8) < 1e-300) {
    res.status = MStepStatus::kept_pose;
    return res;
  }
  const double qb = a.a2 - a.a3 * a.a5 / (2.0 * a.a7) - a.a4 * a.a6 / (2.0 * a.a8);
  const double qc = a.a1 - a.a3 * a.a3 / (4.0 * a.a7) - a.a4 * a.a4 / (4.0 * a.a8);
  const double disc = qb * qb - 4.0 * a.beta_total * qc;
  double s;
  if (disc >= 0.0) {
    // numerically stable positive root
    s = qb <= 0.0 ? (-qb + std::sqrt(disc)) / (2.0 * a.beta_total)
                  : -2.0 * qc / (qb + std::sqrt(disc));
    if (!(s > 0.0) || !std::isfinite(s)) {
      s = previous.s;
      res.status = MStepStatus::fixed_s;
    }
  } else {
    s = previous.s;
    res.status = MStepStatus::fixed_s;
  }
  res.pose.s = s;
  res.pose.tx = (-a.a3 - 2.0 * a.a5 * s) / (2.0 * a.a7);
  res.pose.ty = (-a.a4 - 2.0 * a.a6 * s) / (2.0 * a.a8);
  if (!std::isfinite(res.pose.tx) || !std::isfinite(res.pose.ty)) {
    res.pose = previous;
    res.status = MStepStatus::kept_pose;
  }
  return res;
}

struct RefineResultP4 {
  Similarity pose;
  bool refined = false;  // J was strictly reduced
  int iterations = 0;
  std::vector<double> j_trace;  // J at init and after each accepted step
};

/// Gauss-Newton minimization of J = ||grad Rt||^2 for p = 4, with exact
/// polynomial gradient/Hessian of Rt (including the 2 ln s normalizer term).
/// Returns theta_init unchanged when no step reduces J.
inline RefineResultP4 m_step_refine_p4(const PointSet& x, const LpMixtureModel& model,
                                       const Responsibilities& resp,
                                       const TransformState& state,
                                       const Similarity& theta_init, int gn_max_iters = 20) {
  if (model.p != 4)
    throw std::invalid_argument("m_step_refine_p4: model exponent must be 4");
  RefineResultP4 res;
  res.pose = theta_init;
  ReducedObjective obj(x, model, resp, state, theta_init);
  auto j_of = [&obj](const Similarity& t) {
    const auto g = obj.gradient(t);
    return detail::dot(g, g);
  };
  Similarity cur = theta_init;
  double j = j_of(cur);
  res.j_trace.push_back(j);
  const double j0 = j;
  double damping = 1e-3;
  int rebuilds = 0;
  for (int it = 0; it < gn_max_iters; ++it) {
    const auto g = obj.gradient(cur);
    const auto h = obj.hessian(cur);
    const auto hh = detail::mat_mul(h, h);
    const auto hg = detail::mat_vec(h, g);
    detail::Vec3 step{};
    detail::Mat3 a = hh;
    for (int d = 0; d < 3; ++d) a[d][d] += damping * std::max(hh[d][d], 1.0);
    if (!detail::solve_spd3(a, {-hg[0], -hg[1], -hg[2]}, step)) {
      damping *= 10.0;
      continue;
    }
    Similarity cand{cur.tx + step[0], cur.ty + step[1], cur.s + step[2]};
    if (!(cand.s > 0.0)) {
      damping *= 10.0;
      continue;
    }
    // keep the moment expansion centered near the iterate
    if (rebuilds < 3 && (std::abs(cand.tx - obj.center().tx) > 20.0 ||
                         std::abs(cand.ty - obj.center().ty) > 20.0 ||
                         std::abs(cand.s - obj.center().s) > 0.2)) {
      obj = ReducedObjective(x, model, resp, state, cand);
      ++rebuilds;
    }
    const double jc = j_of(cand);
    if (jc < j) {
      cur = cand;
      j = jc;
      res.j_trace.push_back(j);
      damping = std::max(damping / 3.0, 1e-12);
      ++res.iterations;
    } else {
      damping *= 10.0;
    }
    const double step_norm = detail::norm(step);
    if (j <= 1e-20 * std::max(1.0, j0) || step_norm < 1e-10) break;
  }
  if (j < j0) {
    res.pose = cur;
    res.refined = true;
  }
  return res;
}

struct WeightUpdate {
  std::vector<double> weights;
  double alpha = 0.0;
  bool kept_previous = false;  // all numerators clamped
};

/// MAP weight update: pi_c = (sum_i beta_ic + dirichlet_c - 1) / (normalizer),
/// numerators clamped at 1e-8 and renormalized; alpha = sum gamma over
/// (sum beta + sum(dirichlet - 1)), clamped to the configured bounds.
inline WeightUpdate update_weights(const Responsibilities& resp, const LpMixtureModel& model,
                                   const TransformState& current, double alpha_min = 0.01,
                                   double alpha_max = 0.9) {
  const std::size_t n = resp.n_points, m = resp.n_components;
  WeightUpdate out;
  std::vector<double> beta_sum(m, 0.0);
  double beta_total = 0.0, gamma_total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &resp.beta[i * m];
    for (std::size_t c = 0; c < m; ++c) beta_sum[c] += row[c];
    gamma_total += resp.gamma[i];
  }
  for (double b : beta_sum) beta_total += b;
  double dir_sum = 0.0;
  for (double d : model.dirichlet) dir_sum += d - 1.0;

  out.weights.resize(m);
  std::size_t clamped = 0;
  double num_sum = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    double num = beta_sum[c] + model.dirichlet[c] - 1.0;
    if (num < 1e-8) {
      num = 1e-8;
      ++clamped;
    }
    out.weights[c] = num;
    num_sum += num;
  }
  if (clamped == m) {
    out.weights = current.weights;
    out.kept_previous = true;
  } else {
    for (auto& w : out.weights) w /= num_sum;
  }
  const double denom = beta_total + dir_sum;
  out.alpha = denom > 0.0 ? std::clamp(gamma_total / denom, alpha_min, alpha_max)
                          : std::clamp(current.alpha, alpha_min, alpha_max);
  return out;
}

struct LevelReport {
  int level = 0;
  std::size_t n_points = 0;
  int iterations = 0;
  bool converged = false;
  bool stopped_by_rejection = false;
  std::vector<double> r_trace;       // R at the initial state and after each iterate
  std::vector<Similarity> poses;     // aligned with r_trace
  std::vector<double> alphas;        // aligned with r_trace
  std::vector<double> seconds;       // per accepted iteration
};

struct EmReport {
  std::vector<LevelReport> levels;
  TransformState final_state;
  Responsibilities final_resp;  // full point set, final state
  double final_r = 0.0;
  bool converged = false;
  int selected_init = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline void run_em_level(const PointSet& pts, const LpMixtureModel& model,
                         TransformState& state, const EmConfig& cfg, LevelReport& rep,
                         std::vector<std::string>& warnings) {
  const double dim = double(std::max(model.ref_width, model.ref_height));
  double r_prev = map_objective(pts, model, state);
  rep.n_points = pts.size();
  rep.r_trace.push_back(r_prev);
  rep.poses.push_back(state.pose);
  rep.alphas.push_back(state.alpha);
  for (int it = 0; it < cfg.max_iters; ++it) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto resp = e_step(pts, model, state);
    auto ms = m_step_closed_form_p2(pts, model, resp, state.pose);
    Similarity pose = ms.pose;
    if (model.p == 4) {
      const auto ref = m_step_refine_p4(pts, model, resp, state, pose, cfg.gn_max_iters);
      pose = ref.pose;
    }
    const auto wu = update_weights(resp, model, state, cfg.alpha_min, cfg.alpha_max);
    TransformState cand{pose, wu.weights, wu.alpha};
    double r_new = map_objective(pts, model, cand);
    const double tol = 1e-6 * std::abs(r_prev);
    if (r_new < r_prev - tol) {
      // retry with the pose update alone before giving up on the iteration
      TransformState pose_only{pose, state.weights, state.alpha};
      const double r_pose = map_objective(pts, model, pose_only);
      if (r_pose < r_prev - tol) {
        rep.stopped_by_rejection = true;
        break;
      }
      cand = std::move(pose_only);
      r_new = r_pose;
    }
    const double delta = std::max({std::abs(cand.pose.tx - state.pose.tx),
                                   std::abs(cand.pose.ty - state.pose.ty),
                                   std::abs(cand.pose.s - state.pose.s) * dim});
    state = std::move(cand);
    r_prev = r_new;
    ++rep.iterations;
    rep.r_trace.push_back(r_new);
    rep.poses.push_back(state.pose);
    rep.alphas.push_back(state.alpha);
    rep.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                              .count());
    if (delta <= cfg.epsilon) {
      rep.converged = true;
      break;
    }
  }
  if (rep.stopped_by_rejection) {
    rep.converged = true;  // no admissible ascent step remains
    warnings.push_back("level " + std::to_string(rep.level) +
                       ": M-step candidate rejected, level stopped");
  }
}

}  // namespace detail

/// Two-level EM driver: runs the strided coarse level to convergence, then the
/// full set from the last state. R is tracked per level and is non-decreasing
/// within each level by the acceptance rule.
inline EmReport run_em(const PointSet& x, const LpMixtureModel& model,
                       const TransformState& theta0, const EmConfig& cfg) {
  model.validate();
  if (x.points.empty()) throw std::invalid_argument("run_em: empty point set");
  if (cfg.p != model.p)
    throw std::invalid_argument("run_em: config exponent differs from model");
  if (theta0.weights.size() != model.size())
    throw std::invalid_argument("run_em: weight vector size mismatch");
  if (!(theta0.pose.s > 0.0)) throw std::invalid_argument("run_em: non-positive scale");

  EmReport report;
  TransformState state = theta0;
  state.alpha = std::clamp(state.alpha, 0.0, 1.0);

  std::vector<const PointSet*> levels;
  PointSet coarse;
  if (cfg.stride > 1) {
    bool fell_back = false;
    coarse = downsample(x, cfg.stride, &fell_back);
    if (fell_back)
      report.warnings.push_back("coarse level empty, falling back to full set");
    levels.push_back(&coarse);
  }
  levels.push_back(&x);

  for (std::size_t li = 0; li < levels.size(); ++li) {
    LevelReport rep;
    rep.level = int(li);
    detail::run_em_level(*levels[li], model, state, cfg, rep, report.warnings);
    report.levels.push_back(std::move(rep));
  }
  report.converged = report.levels.back().converged;
  report.final_state = state;
  report.final_resp = e_step(x, model, state);
  report.final_r = map_objective(x, model, state);
  return report;
}

/// Multi-initialization wrapper: one EM run per detection box, final answer is
/// the run with the highest final R (ties break to the lowest index).
inline EmReport run_multi_init(const PointSet& x, const LpMixtureModel& model,
                               const std::vector<RectD>& boxes, const EmConfig& cfg) {
  if (boxes.empty()) throw std::invalid_argument("run_multi_init: need at least one box");
  std::optional<EmReport> best;
  std::string last_error;
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    try {
      const Similarity pose = init_from_box(boxes[b], model.ref_width, model.ref_height);
      TransformState theta0;
      theta0.pose = pose;
      theta0.weights.reserve(model.size());
      for (const auto& c : model.components) theta0.weights.push_back(c.weight);
      theta0.alpha = init_outlier_rate(pose.s, model.ref_width, model.ref_height, x.width,
                                       x.height, cfg.alpha_min, cfg.alpha_max);
      EmReport rep = run_em(x, model, theta0, cfg);
      rep.selected_init = int(b);
      if (!best || rep.final_r > best->final_r) best = std::move(rep);
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  if (!best) throw std::runtime_error("all initializations failed: " + last_error);
  return std::move(*best);
}

}  // namespace lpreg
