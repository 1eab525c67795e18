#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace lpreg::detail {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;

inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline Vec3 mat_vec(const Mat3& m, const Vec3& v) {
  return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
          m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
          m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

inline Mat3 mat_mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

// Cholesky solve of a symmetric positive definite 3x3 system.
// Returns false if a pivot is not positive.
inline bool solve_spd3(const Mat3& a, const Vec3& b, Vec3& x) {
  Mat3 l{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = a[i][j];
      for (int k = 0; k < j; ++k) sum -= l[i][k] * l[j][k];
      if (i == j) {
        if (!(sum > 0.0)) return false;
        l[i][i] = std::sqrt(sum);
      } else {
        l[i][j] = sum / l[j][j];
      }
    }
  }
  Vec3 y{};
  for (int i = 0; i < 3; ++i) {
    double sum = b[i];
    for (int k = 0; k < i; ++k) sum -= l[i][k] * y[k];
    y[i] = sum / l[i][i];
  }
  for (int i = 2; i >= 0; --i) {
    double sum = y[i];
    for (int k = i + 1; k < 3; ++k) sum -= l[k][i] * x[k];
    x[i] = sum / l[i][i];
  }
  return true;
}

// Symmetric 2x2 solve with positivity check, used by the reference-shape fit.
inline bool solve_spd2(double a00, double a01, double a11, double b0, double b1,
                       double& x0, double& x1) {
  if (!(a00 > 0.0)) return false;
  const double l00 = std::sqrt(a00);
  const double l10 = a01 / l00;
  const double d = a11 - l10 * l10;
  if (!(d > 0.0)) return false;
  const double l11 = std::sqrt(d);
  const double y0 = b0 / l00;
  const double y1 = (b1 - l10 * y0) / l11;
  x1 = y1 / l11;
  x0 = (y0 - l10 * x1) / l00;
  return true;
}

// x^n for small non-negative integer n.
inline double ipow(double x, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

// Binomial coefficient for small arguments.
inline double binom(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * double(n - k + i) / double(i);
  return r;
}

}  // namespace lpreg::detail
