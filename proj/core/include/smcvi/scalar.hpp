#pragma once

// Scalar helpers shared by double and ad::Var code paths. Model code is
// written once as a template over the scalar type; calls such as
// `softplus(x)` resolve here for double and via ADL for ad::Var.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "smcvi/autodiff.hpp"

namespace smcvi {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using ad::Var;

inline double value(double x) { return x; }
inline double square(double x) { return x * x; }
inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
inline double stop_gradient(double x) { return x; }

inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return kNegInf;
  double m = xs[0];
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}
inline double sum(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}
inline double dot(std::span<const double> coeffs, std::span<const double> xs) {
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) s += coeffs[i] * xs[i];
  return s;
}

template <class T>
inline T from_double(double v) {
  return T(v);
}

/// log N(x; mean, sd²) with sd given through its logarithm.
template <class T>
T normal_logpdf_logsd(const T& x, const T& mean, const T& log_sd) {
  using std::exp;
  const T z = (x - mean) * exp(-log_sd);
  return -0.5 * kLog2Pi - log_sd - 0.5 * z * z;
}

template <class T>
T normal_logpdf(const T& x, const T& mean, const T& variance) {
  using std::log;
  const T d = x - mean;
  return -0.5 * (kLog2Pi + log(variance)) - 0.5 * d * d / variance;
}

/// Lower-triangular Cholesky factor of a small dense SPD matrix, row-major.
/// Returns false if a pivot is not strictly positive.
template <class T>
bool cholesky(std::span<const T> a, std::size_t n, std::vector<T>& l) {
  using std::sqrt;
  l.assign(n * n, T(0.0));
  for (std::size_t j = 0; j < n; ++j) {
    T d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d = d - l[j * n + k] * l[j * n + k];
    if (!(value(d) > 0.0)) return false;
    const T ljj = sqrt(d);
    l[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      T s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s = s - l[i * n + k] * l[j * n + k];
      l[i * n + j] = s / ljj;
    }
  }
  return true;
}

/// log N(x; mean, L Lᵀ) for lower-triangular L (row-major, n×n).
template <class T, class L>
T mvn_logpdf_chol(std::span<const T> x, std::span<const T> mean, std::span<const L> chol,
                  std::size_t n) {
  using std::log;
  std::vector<T> z(n, T(0.0));
  T quad(0.0);
  T logdet(0.0);
  for (std::size_t i = 0; i < n; ++i) {
    T s = x[i] - mean[i];
    for (std::size_t k = 0; k < i; ++k) s = s - chol[i * n + k] * z[k];
    z[i] = s / chol[i * n + i];
    quad = quad + z[i] * z[i];
    logdet = logdet + log(T(chol[i * n + i]));
  }
  return -0.5 * static_cast<double>(n) * kLog2Pi - logdet - 0.5 * quad;
}

}  // namespace smcvi
