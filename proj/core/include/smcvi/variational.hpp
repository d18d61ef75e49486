#pragma once

// Mean-field variational distributions over static parameters. Every factor
// is a location/log-scale normal in an unconstrained coordinate x, pushed
// through a fixed transform onto the parameter's support:
//   normal          θ = x           ℝ
//   log-normal      θ = exp(x)      (0, ∞)
//   sigmoid-normal  θ = sigm(x)     (0, 1)

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "smcvi/random.hpp"
#include "smcvi/scalar.hpp"

namespace smcvi {

enum class FactorKind { Normal, LogNormal, SigmoidNormal, TanhNormal };

const char* factor_kind_name(FactorKind kind);
FactorKind parse_factor_kind(const std::string& name);

struct Factor {
  std::string name;
  FactorKind kind = FactorKind::Normal;
  double mu = 0.0;
  double v = std::log(0.1);  // log standard deviation
};

class UnsupportedFactorError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <class T>
T factor_transform(FactorKind kind, const T& x) {
  using std::exp;
  switch (kind) {
    case FactorKind::Normal: return x;
    case FactorKind::LogNormal: return exp(x);
    case FactorKind::SigmoidNormal: return sigmoid(x);
    case FactorKind::TanhNormal: return tanh(x);
  }
  return x;
}

double factor_inverse(FactorKind kind, double theta);

/// log |dθ/dx|. The sigmoid case is log θ + log(1-θ), the tanh case
/// log(1-θ²), both evaluated stably in x.
template <class T>
T factor_log_jacobian(FactorKind kind, const T& x) {
  switch (kind) {
    case FactorKind::Normal: return T(0.0);
    case FactorKind::LogNormal: return x;
    case FactorKind::SigmoidNormal: return -softplus(-x) - softplus(x);
    case FactorKind::TanhNormal: return std::log(4.0) - 2.0 * x - 2.0 * softplus(-2.0 * x);
  }
  return T(0.0);
}

template <class T>
struct ThetaDraw {
  std::vector<T> theta;
  T log_q{0.0};
};

/// θ_i = transform(mu_i + e^{v_i} η_i); log_q includes the transform Jacobian.
template <class T>
ThetaDraw<T> reparam_draw(std::span<const FactorKind> kinds, std::span<const T> mu,
                          std::span<const T> log_sd, std::span<const double> eta) {
  using std::exp;
  ThetaDraw<T> out;
  out.theta.reserve(kinds.size());
  T log_q(0.0);
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    const T x = mu[i] + exp(log_sd[i]) * eta[i];
    out.theta.push_back(factor_transform(kinds[i], x));
    log_q = log_q + (-0.5 * kLog2Pi - 0.5 * eta[i] * eta[i]) - log_sd[i] -
            factor_log_jacobian(kinds[i], x);
  }
  out.log_q = log_q;
  return out;
}

class MeanFieldFamily {
 public:
  MeanFieldFamily() = default;
  explicit MeanFieldFamily(std::vector<Factor> factors) : factors_(std::move(factors)) {}

  std::size_t size() const noexcept { return factors_.size(); }
  const std::vector<Factor>& factors() const noexcept { return factors_; }
  std::vector<Factor>& factors() noexcept { return factors_; }
  const Factor& operator[](std::size_t i) const { return factors_.at(i); }
  Factor& operator[](std::size_t i) { return factors_.at(i); }
  std::optional<std::size_t> find(const std::string& name) const;

  std::vector<FactorKind> kinds() const;
  std::vector<double> mus() const;
  std::vector<double> log_sds() const;

  /// Plain sample without gradient tracking.
  ThetaDraw<double> sample(RngStream& rng) const;
  /// log q_ψ(θ) at a constrained-space point; -inf outside the support.
  double log_density(std::span<const double> theta) const;
  /// Mean of each factor where it has a closed form; sigm(mu) for
  /// sigmoid-normal factors.
  std::vector<double> mean() const;
  /// transform(mu) for every factor (the EM point estimate).
  std::vector<double> location() const;

 private:
  std::vector<Factor> factors_;
};

/// Per-factor Fisher information block in (mu, v) coordinates.
std::array<double, 4> fisher_block(const Factor& factor);

/// Prior densities over a single constrained parameter. Second parameters
/// follow the usual conventions: Normal/LogNormal take a variance, Gamma a
/// rate, InverseGamma a scale.
struct Prior {
  enum class Kind { Normal, Gamma, Uniform, LogNormal, InverseGamma, Flat };
  Kind kind = Kind::Flat;
  double a = 0.0;
  double b = 1.0;

  static Prior normal(double mean, double variance) { return {Kind::Normal, mean, variance}; }
  static Prior gamma(double shape, double rate) { return {Kind::Gamma, shape, rate}; }
  static Prior uniform(double lo, double hi) { return {Kind::Uniform, lo, hi}; }
  static Prior log_normal(double mu, double variance) { return {Kind::LogNormal, mu, variance}; }
  static Prior inverse_gamma(double shape, double scale) { return {Kind::InverseGamma, shape, scale}; }
  static Prior flat() { return {}; }
};

std::string prior_to_string(const Prior& p);

/// Exact log-density; -inf (not an exception) outside the support.
template <class T>
T log_prior(const Prior& p, const T& theta) {
  using std::log;
  const double t = value(theta);
  switch (p.kind) {
    case Prior::Kind::Flat: return T(0.0);
    case Prior::Kind::Normal: {
      const T d = theta - p.a;
      return -0.5 * (kLog2Pi + std::log(p.b)) - 0.5 * d * d / p.b;
    }
    case Prior::Kind::Gamma: {
      if (!(t > 0.0)) return T(kNegInf);
      return p.a * std::log(p.b) - std::lgamma(p.a) + (p.a - 1.0) * log(theta) - p.b * theta;
    }
    case Prior::Kind::Uniform: {
      if (t < p.a || t > p.b) return T(kNegInf);
      return T(-std::log(p.b - p.a));
    }
    case Prior::Kind::LogNormal: {
      if (!(t > 0.0)) return T(kNegInf);
      const T lt = log(theta);
      const T d = lt - p.a;
      return -0.5 * (kLog2Pi + std::log(p.b)) - lt - 0.5 * d * d / p.b;
    }
    case Prior::Kind::InverseGamma: {
      if (!(t > 0.0)) return T(kNegInf);
      return p.a * std::log(p.b) - std::lgamma(p.a) - (p.a + 1.0) * log(theta) - p.b / theta;
    }
  }
  return T(0.0);
}

}  // namespace smcvi
