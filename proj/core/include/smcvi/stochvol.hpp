#pragma once

// Multivariate stochastic volatility:
//   x_0 ~ N(μ, Σ0),  x_n ~ N(μ + a∘(x_{n-1} − μ), LLᵀ),  y_n ~ N(0, diag e^{x_n})
// with Σ0 the stationary covariance, Σ0_ij = Σ_ij / (1 − a_i a_j).

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "smcvi/random.hpp"
#include "smcvi/scalar.hpp"
#include "smcvi/smc.hpp"
#include "smcvi/variational.hpp"

namespace smcvi::sv {

template <class T>
struct Params {
  std::size_t dim = 0;
  std::vector<T> mu;
  std::vector<T> a;
  std::vector<T> L;  // lower triangular, row-major dim×dim, positive diagonal
};

/// Σ0_ij = Σ_ij / (1 − a_i a_j); throws std::domain_error if any |a_i| ≥ 1.
template <class T>
std::vector<T> lyapunov_stationary(std::span<const T> a, std::span<const T> sigma, std::size_t dim) {
  for (std::size_t i = 0; i < dim; ++i) {
    if (!(std::abs(value(a[i])) < 1.0)) throw std::domain_error("stationary covariance needs |a_i| < 1");
  }
  std::vector<T> out(dim * dim);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) out[i * dim + j] = sigma[i * dim + j] / (1.0 - a[i] * a[j]);
  }
  return out;
}

template <class T>
std::vector<T> covariance_from_chol(std::span<const T> L, std::size_t dim) {
  std::vector<T> s(dim * dim, T(0.0));
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      T acc(0.0);
      for (std::size_t k = 0; k <= std::min(i, j); ++k) acc = acc + L[i * dim + k] * L[j * dim + k];
      s[i * dim + j] = acc;
    }
  }
  return s;
}

/// Diagonal Gaussian proposal log-variances around the prior transition mean.
template <class T>
struct Proposal {
  std::vector<T> log_var;
  std::vector<T> log_var0;
};

template <class T>
class Model {
 public:
  using Scalar = T;

  /// Without a proposal the transition prior is used.
  Model(const Params<T>& p, const Proposal<T>* proposal, const Eigen::MatrixXd& y)
      : p_(p), prop_(proposal), y_(y) {
    const std::size_t d = p_.dim;
    if (static_cast<std::size_t>(y.cols()) != d) throw std::invalid_argument("observation width != dim");
    const auto sigma = covariance_from_chol<T>(p_.L, d);
    const auto s0 = lyapunov_stationary<T>(p_.a, sigma, d);
    if (!cholesky<T>(s0, d, chol0_)) throw NumericError("stationary covariance not positive definite");
  }

  std::size_t num_steps() const { return static_cast<std::size_t>(y_.rows()); }
  std::size_t state_dim() const { return p_.dim; }
  std::size_t noise_dim(std::size_t) const { return p_.dim; }

  void propose(std::size_t, std::span<const T> parent, std::span<const double> eps, std::span<T> out) const {
    using std::exp;
    const std::size_t d = p_.dim;
    if (prop_) {
      for (std::size_t i = 0; i < d; ++i) {
        const T& lv = parent.empty() ? prop_->log_var0[i] : prop_->log_var[i];
        out[i] = mean(parent, i) + exp(0.5 * lv) * eps[i];
      }
      return;
    }
    const std::vector<T>& chol = parent.empty() ? chol0_ : p_.L;
    for (std::size_t i = 0; i < d; ++i) {
      T noise(0.0);
      for (std::size_t j = 0; j <= i; ++j) noise = noise + chol[i * d + j] * eps[j];
      out[i] = mean(parent, i) + noise;
    }
  }

  T log_proposal(std::size_t n, std::span<const T> parent, std::span<const T> x) const {
    if (!prop_) return log_transition(n, parent, x);
    T lp(0.0);
    for (std::size_t i = 0; i < p_.dim; ++i) {
      const T& lv = parent.empty() ? prop_->log_var0[i] : prop_->log_var[i];
      lp = lp + normal_logpdf_logsd(x[i], mean(parent, i), T(0.5 * lv));
    }
    return lp;
  }

  T log_transition(std::size_t, std::span<const T> parent, std::span<const T> x) const {
    std::vector<T> m(p_.dim);
    for (std::size_t i = 0; i < p_.dim; ++i) m[i] = mean(parent, i);
    const std::vector<T>& chol = parent.empty() ? chol0_ : p_.L;
    return mvn_logpdf_chol<T, T>(x, m, chol, p_.dim);
  }

  T log_observation(std::size_t n, std::span<const T> x) const {
    using std::exp;
    T lp(0.0);
    for (std::size_t i = 0; i < p_.dim; ++i) {
      const double yi = y_(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(i));
      lp = lp - 0.5 * (kLog2Pi + x[i] + yi * yi * exp(-x[i]));
    }
    return lp;
  }

  /// μ_i + a_i(x_i − μ_i), or μ_i at the initial step.
  T mean(std::span<const T> parent, std::size_t i) const {
    if (parent.empty()) return p_.mu[i];
    return p_.mu[i] + p_.a[i] * (parent[i] - p_.mu[i]);
  }

  const std::vector<T>& initial_chol() const { return chol0_; }

 private:
  const Params<T>& p_;
  const Proposal<T>* prop_;
  const Eigen::MatrixXd& y_;
  std::vector<T> chol0_;
};

/// Draws (x, y) of length horizon+1 from the generative model.
struct Simulation {
  Eigen::MatrixXd x;
  Eigen::MatrixXd y;
};
Simulation simulate(const Params<double>& p, std::size_t horizon, RngStream& rng);

/// θ layout shared by the family and the recipe:
///   μ (D), a (D), L strictly-lower entries row by row (D(D−1)/2), L diagonal (D).
std::size_t theta_size(std::size_t dim);
template <class T>
Params<T> params_from_theta(std::span<const T> theta, std::size_t dim) {
  Params<T> p;
  p.dim = dim;
  std::size_t o = 0;
  for (std::size_t i = 0; i < dim; ++i) p.mu.push_back(theta[o++]);
  for (std::size_t i = 0; i < dim; ++i) p.a.push_back(theta[o++]);
  p.L.assign(dim * dim, T(0.0));
  for (std::size_t i = 1; i < dim; ++i) {
    for (std::size_t j = 0; j < i; ++j) p.L[i * dim + j] = theta[o++];
  }
  for (std::size_t i = 0; i < dim; ++i) p.L[i * dim + i] = theta[o++];
  return p;
}
std::vector<double> theta_from_params(const Params<double>& p);

/// Mean-field family: normal μ, sigmoid-normal a, normal off-diagonal L,
/// log-normal diagonal L. μ means start at the log per-component sample
/// standard deviation of `y`, diag L at 0.2.
MeanFieldFamily default_family(const Eigen::MatrixXd& y, double a_init = 0.9);
std::vector<Prior> default_priors(std::size_t dim);

class Recipe {
 public:
  Recipe(std::vector<Eigen::MatrixXd> series, double proposal_log_var = std::log(0.1));

  std::size_t num_series() const { return series_.size(); }
  MeanFieldFamily initial_family() const { return default_family(series_.front()); }
  std::vector<Prior> priors() const { return default_priors(dim_); }
  std::vector<double> initial_proposal() const;
  double evidence_scale(std::size_t) const { return 1.0; }
  std::size_t dim() const { return dim_; }

  template <class T>
  ParticleSystem<T> run(std::span<const T> theta, std::span<const T> phi, std::size_t s,
                        const SmcOptions& opts, SmcStreams& streams) const {
    const Params<T> p = params_from_theta(theta, dim_);
    const Proposal<T> q = make_proposal(phi, dim_);
    Model<T> model(p, &q, series_.at(s));
    return run_smc(model, opts, streams);
  }

  template <class T>
  static Proposal<T> make_proposal(std::span<const T> phi, std::size_t dim) {
    Proposal<T> q;
    q.log_var.assign(phi.begin(), phi.begin() + static_cast<std::ptrdiff_t>(dim));
    q.log_var0.assign(phi.begin() + static_cast<std::ptrdiff_t>(dim),
                      phi.begin() + static_cast<std::ptrdiff_t>(2 * dim));
    return q;
  }

 private:
  std::vector<Eigen::MatrixXd> series_;
  std::size_t dim_;
  double proposal_log_var_;
};

/// Where θ comes from in the predictive estimator.
struct ThetaSource {
  const MeanFieldFamily* family = nullptr;  // VB: θ_s ~ q_ψ
  std::vector<double> fixed;                // EM / known θ: shared by all S filters
};

struct PredictiveOptions {
  std::size_t samples = 4;     // S
  std::size_t particles = 50;  // K
  std::size_t steps_ahead = 1; // p ∈ {1, 2}
  ResamplingPolicy policy = ResamplingPolicy::always();
};

/// log p̂(y_{m+p} | y_{0:m}): S particle filters on y_{0:m}, each particle
/// propagated p steps through the generative model, y_{m+p} scored under the
/// resulting weighted mixture. `phi` may be empty (bootstrap filters).
double predictive_loglik(const ThetaSource& source, std::span<const double> phi, const Eigen::MatrixXd& y,
                         std::size_t m, const PredictiveOptions& opts, RngStream& rng);

/// Mean of predictive_loglik over conditioning points m = M−p−w+1 .. M−p,
/// i.e. the last `window` predictable observations.
double predictive_sweep(const ThetaSource& source, std::span<const double> phi, const Eigen::MatrixXd& y,
                        std::size_t window, const PredictiveOptions& opts, RngStream& rng);

}  // namespace smcvi::sv
