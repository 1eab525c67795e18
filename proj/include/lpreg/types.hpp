#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace lpreg {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

/// Ordered set of facade label names ("window", "door", ...).
struct LabelSet {
  std::vector<std::string> names;

  std::size_t size() const { return names.size(); }

  void validate() const {
    if (names.empty()) throw std::invalid_argument("LabelSet: need at least one label");
    std::unordered_set<std::string> seen;
    for (const auto& n : names) {
      if (n.empty()) throw std::invalid_argument("LabelSet: empty label name");
      if (!seen.insert(n).second)
        throw std::invalid_argument("LabelSet: duplicate label name '" + n + "'");
    }
  }

  bool operator==(const LabelSet& o) const { return names == o.names; }
};

/// Per-pixel label probabilities for a target image, K planes of H*W.
/// Probabilities are stored at the .lpm file precision (float32) so that a
/// write/read round trip is bit-exact; computation downstream is in double.
struct LabelProbMap {
  int width = 0;
  int height = 0;
  LabelSet labels;
  std::vector<float> planes;  // K planes, each row-major H*W

  std::size_t plane_size() const { return std::size_t(width) * std::size_t(height); }

  float at(int x, int y, std::size_t label) const {
    return planes[label * plane_size() + std::size_t(y) * width + x];
  }
  float& at(int x, int y, std::size_t label) {
    return planes[label * plane_size() + std::size_t(y) * width + x];
  }

  void validate() const {
    labels.validate();
    if (width <= 0 || height <= 0) throw std::invalid_argument("LabelProbMap: bad dimensions");
    if (planes.size() != plane_size() * labels.size())
      throw std::invalid_argument("LabelProbMap: plane buffer size mismatch");
    for (std::size_t i = 0; i < plane_size(); ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < labels.size(); ++j) {
        const float v = planes[j * plane_size() + i];
        if (!(v >= 0.0f) || !(v <= 1.0f))
          throw std::invalid_argument("LabelProbMap: probability out of [0,1]");
        sum += v;
      }
      if (sum > 1.0 + 1e-6) throw std::invalid_argument("LabelProbMap: pixel mass exceeds 1");
    }
  }
};

/// One observed data point: pixel coordinates plus its K prior label probabilities.
struct Point {
  double x = 0.0;
  double y = 0.0;
  std::vector<double> prior;
};

struct PointSet {
  std::vector<Point> points;
  int width = 0;   // source image dimensions (full frame, also after downsampling)
  int height = 0;

  std::size_t size() const { return points.size(); }
};

/// Axis-aligned Lp Gaussian component in the reference frame.
/// sxx/syy are the denominators of the exponent norm (units px^p).
struct LpComponent {
  int label = 0;
  Vec2 mu;
  double sxx = 1.0;
  double syy = 1.0;
  double weight = 0.0;
};

/// Reference facade model: mixture components grouped by label, even exponent p,
/// reference dimensions, and the Dirichlet pseudo-parameters of the weights.
struct LpMixtureModel {
  std::vector<LpComponent> components;
  std::vector<double> dirichlet;  // one per component
  int p = 4;
  int ref_width = 0;
  int ref_height = 0;
  LabelSet labels;

  std::size_t size() const { return components.size(); }

  void validate() const {
    labels.validate();
    if (p < 2 || p % 2 != 0) throw std::invalid_argument("LpMixtureModel: p must be even >= 2");
    if (components.empty()) throw std::invalid_argument("LpMixtureModel: empty model");
    if (dirichlet.size() != components.size())
      throw std::invalid_argument("LpMixtureModel: dirichlet size mismatch");
    if (ref_width <= 0 || ref_height <= 0)
      throw std::invalid_argument("LpMixtureModel: bad reference dimensions");
    double wsum = 0.0;
    for (const auto& c : components) {
      if (!(c.sxx > 0.0) || !(c.syy > 0.0))
        throw std::invalid_argument("LpMixtureModel: non-positive spread");
      if (c.weight < 0.0 || c.weight > 1.0)
        throw std::invalid_argument("LpMixtureModel: weight out of [0,1]");
      if (c.label < 0 || std::size_t(c.label) >= labels.size())
        throw std::invalid_argument("LpMixtureModel: component label out of range");
      wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9)
      throw std::invalid_argument("LpMixtureModel: weights must sum to 1");
  }
};

/// Similarity transform (uniform scale + translation), target = s * ref + t.
struct Similarity {
  double tx = 0.0;
  double ty = 0.0;
  double s = 1.0;
};

/// Full EM parameter state Theta: pose, mixture weights, outlier rate.
struct TransformState {
  Similarity pose;
  std::vector<double> weights;
  double alpha = 0.25;
};

/// E-step output: beta is N x M row-major, gamma is N.
struct Responsibilities {
  std::size_t n_points = 0;
  std::size_t n_components = 0;
  std::vector<double> beta;
  std::vector<double> gamma;

  double beta_at(std::size_t i, std::size_t c) const { return beta[i * n_components + c]; }
  double& beta_at(std::size_t i, std::size_t c) { return beta[i * n_components + c]; }
};

struct RectD {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
};

}  // namespace lpreg
