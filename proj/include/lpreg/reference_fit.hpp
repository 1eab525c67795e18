#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lpreg/density.hpp"
#include "lpreg/types.hpp"

namespace lpreg {

/// Ground-truth reference segmentation: 0 = background, v in 1..K = label v-1.
struct ReferenceSegmentation {
  int width = 0;
  int height = 0;
  LabelSet labels;
  std::vector<std::uint8_t> mask;  // row-major height*width

  std::uint8_t at(int x, int y) const { return mask[std::size_t(y) * width + x]; }

  void validate() const {
    labels.validate();
    if (width <= 0 || height <= 0)
      throw std::invalid_argument("ReferenceSegmentation: bad dimensions");
    if (mask.size() != std::size_t(width) * height)
      throw std::invalid_argument("ReferenceSegmentation: mask size mismatch");
    for (auto v : mask)
      if (v > labels.size())
        throw std::invalid_argument("ReferenceSegmentation: mask value exceeds label count");
  }
};

struct ConnectedComponent {
  int label = 0;
  std::vector<std::pair<int, int>> pixels;  // (x, y)
};

inline constexpr int kMinComponentPx = 4;
inline constexpr double kVarianceFloor = 0.25;  // px^2

/// 4-connected components per label value; components smaller than
/// min_component_px are discarded. Throws if nothing remains.
inline std::vector<ConnectedComponent> extract_components(const ReferenceSegmentation& seg,
                                                          int min_component_px = kMinComponentPx) {
  seg.validate();
  const int w = seg.width, h = seg.height;
  std::vector<std::uint8_t> visited(std::size_t(w) * h, 0);
  std::vector<ConnectedComponent> out;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = std::size_t(y) * w + x;
      const std::uint8_t v = seg.mask[idx];
      if (v == 0 || visited[idx]) continue;
      ConnectedComponent cc;
      cc.label = int(v) - 1;
      stack.assign(1, {x, y});
      visited[idx] = 1;
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        cc.pixels.emplace_back(cx, cy);
        constexpr int dx[4] = {1, -1, 0, 0};
        constexpr int dy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const int nx = cx + dx[k], ny = cy + dy[k];
          if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
          const std::size_t nidx = std::size_t(ny) * w + nx;
          if (visited[nidx] || seg.mask[nidx] != v) continue;
          visited[nidx] = 1;
          stack.emplace_back(nx, ny);
        }
      }
      if (int(cc.pixels.size()) >= min_component_px) out.push_back(std::move(cc));
    }
  }
  if (out.empty()) throw std::runtime_error("empty reference model");
  return out;
}

/// Variance -> spread conversion constant; makes the 1D density exp(-x^p/Sigma)
/// carry the given variance (c_2 = 2, c_4 = Gamma(1/4)/Gamma(3/4)).
inline double moment_constant(int p) {
  return std::tgamma(1.0 / p) / std::tgamma(3.0 / p);
}

/// Mean/variance initialization of a component (mu, Sigma only).
inline LpComponent moment_init(const ConnectedComponent& cc, int p) {
  const double n = double(cc.pixels.size());
  double mx = 0.0, my = 0.0;
  for (auto [x, y] : cc.pixels) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0;
  for (auto [x, y] : cc.pixels) {
    vx += (x - mx) * (x - mx);
    vy += (y - my) * (y - my);
  }
  vx = std::max(vx / n, kVarianceFloor);
  vy = std::max(vy / n, kVarianceFloor);
  const double cp = moment_constant(p);
  LpComponent out;
  out.label = cc.label;
  out.mu = {mx, my};
  out.sxx = std::pow(cp * vx, p / 2.0);
  out.syy = std::pow(cp * vy, p / 2.0);
  return out;
}

struct RefineResult {
  LpComponent component;
  bool fell_back = false;  // refinement did not improve, moment init returned
  bool clamped = false;    // spread hit the safeguard box
  double objective = 0.0;  // final fit objective
  int iterations = 0;
};

namespace detail {

// Lp density misfit of the component pixels: negative log-likelihood
//   sum_q ||q - mu||_{p,Sigma}^p + n * ln Z(Sigma),   ln Z ~ (1/p) ln(sxx*syy) + const
// in the parameters (mux, muy, ln sxx, ln syy).
inline double refine_objective(const ConnectedComponent& cc, double mx, double my,
                               double lsx, double lsy, int p) {
  const double isx = std::exp(-lsx), isy = std::exp(-lsy);
  double acc = 0.0;
  for (auto [x, y] : cc.pixels)
    acc += pow_even(x - mx, p) * isx + pow_even(y - my, p) * isy;
  return acc + double(cc.pixels.size()) * (lsx + lsy) / p;
}

}  // namespace detail

/// Refines (mu, Sigma) by fitting the Lp Gaussian form to the component pixels
/// with a damped Newton iteration. The x and y parameter pairs decouple, so each
/// step solves two 2x2 systems. Levenberg damping x10 on rejected steps; stops at
/// step norm < 1e-6 or 50 iterations. The output spread is clamped to
/// [0.25x, 4x] of the moment initialization per axis.
inline RefineResult refine_component(const ConnectedComponent& cc, const LpComponent& init,
                                     int p) {
  RefineResult res;
  res.component = init;
  const double n = double(cc.pixels.size());
  double mx = init.mu.x, my = init.mu.y;
  double lsx = std::log(init.sxx), lsy = std::log(init.syy);
  double obj = detail::refine_objective(cc, mx, my, lsx, lsy, p);
  const double obj0 = obj;
  double damping = 1e-3;
  int it = 0;
  for (; it < 50; ++it) {
    // gradient and Hessian, separable per axis
    const double isx = std::exp(-lsx), isy = std::exp(-lsy);
    double gmx = 0, gsx = n / p, hmm_x = 0, hms_x = 0, hss_x = 0;
    double gmy = 0, gsy = n / p, hmm_y = 0, hms_y = 0, hss_y = 0;
    for (auto [x, y] : cc.pixels) {
      const double ux = x - mx, uy = y - my;
      const double uxm2 = detail::pow_even(ux, p - 2) * ux;  // ux^{p-1}
      const double uym2 = detail::pow_even(uy, p - 2) * uy;
      const double uxp = uxm2 * ux, uyp = uym2 * uy;
      gmx -= p * uxm2 * isx;
      gsx -= uxp * isx;
      hmm_x += p * (p - 1) * detail::pow_even(ux, p - 2) * isx;
      hms_x += p * uxm2 * isx;
      hss_x += uxp * isx;
      gmy -= p * uym2 * isy;
      gsy -= uyp * isy;
      hmm_y += p * (p - 1) * detail::pow_even(uy, p - 2) * isy;
      hms_y += p * uym2 * isy;
      hss_y += uyp * isy;
    }
    double dmx = 0, dlsx = 0, dmy = 0, dlsy = 0;
    const bool okx = detail::solve_spd2(hmm_x + damping * std::max(hmm_x, 1.0), hms_x,
                                        hss_x + damping * std::max(hss_x, 1.0), -gmx, -gsx,
                                        dmx, dlsx);
    const bool oky = detail::solve_spd2(hmm_y + damping * std::max(hmm_y, 1.0), hms_y,
                                        hss_y + damping * std::max(hss_y, 1.0), -gmy, -gsy,
                                        dmy, dlsy);
    if (!okx || !oky) {
      damping *= 10.0;
      continue;
    }
    const double step = std::sqrt(dmx * dmx + dmy * dmy + dlsx * dlsx + dlsy * dlsy);
    const double cand = detail::refine_objective(cc, mx + dmx, my + dmy, lsx + dlsx,
                                                 lsy + dlsy, p);
    if (cand <= obj) {
      mx += dmx;
      my += dmy;
      lsx += dlsx;
      lsy += dlsy;
      obj = cand;
      damping = std::max(damping / 10.0, 1e-12);
    } else {
      damping *= 10.0;
    }
    if (step < 1e-6) break;
  }
  res.iterations = it;
  if (!(obj <= obj0) || !std::isfinite(obj)) {
    res.fell_back = true;
    res.objective = obj0;
    return res;  // moment init, flagged
  }
  double sxx = std::exp(lsx), syy = std::exp(lsy);
  const auto clamp_box = [&res](double v, double ref) {
    const double lo = 0.25 * ref, hi = 4.0 * ref;
    if (v < lo || v > hi) {
      res.clamped = true;
      return std::clamp(v, lo, hi);
    }
    return v;
  };
  sxx = clamp_box(sxx, init.sxx);
  syy = clamp_box(syy, init.syy);
  res.component.label = init.label;
  res.component.mu = {mx, my};
  res.component.sxx = sxx;
  res.component.syy = syy;
  res.objective = obj;
  return res;
}

/// Full reference pipeline: connected components, moment init, shape refinement,
/// pixel-count weights (globally normalized), Dirichlet parameters equal to the
/// initial weights. Components are sorted by (label, mu_y, mu_x) for determinism.
inline LpMixtureModel build_model(const ReferenceSegmentation& seg, int p) {
  if (p < 2 || p % 2 != 0) throw std::invalid_argument("build_model: p must be even >= 2");
  const auto ccs = extract_components(seg);
  LpMixtureModel model;
  model.p = p;
  model.ref_width = seg.width;
  model.ref_height = seg.height;
  model.labels = seg.labels;
  double total = 0.0;
  for (const auto& cc : ccs) total += double(cc.pixels.size());
  for (const auto& cc : ccs) {
    auto refined = refine_component(cc, moment_init(cc, p), p);
    refined.component.weight = double(cc.pixels.size()) / total;
    model.components.push_back(refined.component);
  }
  std::sort(model.components.begin(), model.components.end(),
            [](const LpComponent& a, const LpComponent& b) {
              if (a.label != b.label) return a.label < b.label;
              if (a.mu.y != b.mu.y) return a.mu.y < b.mu.y;
              return a.mu.x < b.mu.x;
            });
  model.dirichlet.reserve(model.components.size());
  for (const auto& c : model.components) model.dirichlet.push_back(c.weight);
  model.validate();
  return model;
}

}  // namespace lpreg
