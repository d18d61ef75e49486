#pragma once

// Linear-Gaussian state-space model
//   x_0 ~ N(A0, Σx0),  x_n = A x_{n-1} + N(0, Σx),  y_n = B x_n + N(0, Σy)
// with exact Kalman/RTS oracles (double precision, Eigen) and a templated
// SMC plugin using affine-Gaussian proposals.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "smcvi/random.hpp"
#include "smcvi/scalar.hpp"
#include "smcvi/smc.hpp"
#include "smcvi/variational.hpp"

namespace smcvi::lgss {

struct Params {
  Eigen::MatrixXd A;    // dx×dx
  Eigen::MatrixXd B;    // dy×dx
  Eigen::MatrixXd Sx;   // dx×dx
  Eigen::MatrixXd Sx0;  // dx×dx
  Eigen::MatrixXd Sy;   // dy×dy
  Eigen::VectorXd A0;   // dx

  std::size_t dx() const { return static_cast<std::size_t>(A.rows()); }
  std::size_t dy() const { return static_cast<std::size_t>(B.rows()); }
  void validate() const;
};

struct Simulation {
  Eigen::MatrixXd x;  // (M+1)×dx
  Eigen::MatrixXd y;  // (M+1)×dy
};

/// Draws x_{0:M}, y_{0:M}. Zero covariances are allowed (deterministic rows).
Simulation simulate(const Params& p, std::size_t horizon, RngStream& rng);

struct KalmanResult {
  double loglik = 0.0;
  std::vector<Eigen::VectorXd> pred_mean, filt_mean;
  std::vector<Eigen::MatrixXd> pred_cov, filt_cov;
};

/// Prediction-error decomposition; throws NumericError on a non-PD
/// innovation covariance.
KalmanResult kalman_filter(const Params& p, const Eigen::MatrixXd& y);
double kalman_loglik(const Params& p, const Eigen::MatrixXd& y);

struct Gaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Rauch–Tung–Striebel smoothed marginals p(x_n | y_{0:M}).
std::vector<Gaussian> rts_smooth(const Params& p, const Eigen::MatrixXd& y);

/// Exact posterior of (x_0^(0), x_0^(1), x_1^(0), x_1^(1)) for the 2-D AR
/// model with A = λI, B = (1,1), unit noises and stationary x_0.
Gaussian two_step_posterior(double lambda, double y0, double y1);
Eigen::Matrix4d two_step_precision(double lambda);
double gaussian_logpdf(const Gaussian& g, const Eigen::VectorXd& x);

/// 2-D AR model used for the bias and marginal-density experiments.
Params ar_params(double lambda);
/// High-dimensional configuration: A_ij = alpha^{|i-j|+1}, B_ij ~ N(0,1),
/// identity covariances, A0 = 0.
Params highdim_params(std::size_t dx, std::size_t dy, double alpha, RngStream& rng);

/// SMC-side parameter set. Σx is fixed (Cholesky factor, double); Σx0 and Σy
/// are diagonal and may depend on θ.
template <class T>
struct Theta {
  std::size_t dx = 0, dy = 0;
  std::vector<T> A, B, A0, sx0_diag, sy_diag;
  std::vector<double> sx_chol;
};

/// Affine-Gaussian proposal
///   M_0 = N(A0φ + Bφ y_0, diag e^{log_var0}),  M_n = N(Aφ x + Bφ y_n, diag e^{log_var}).
template <class T>
struct Proposal {
  std::vector<T> A, B, A0, log_var, log_var0;  // A: dx×dx, B: dx×dy
};

Theta<double> theta_from_params(const Params& p);
/// Proposal initialized to the transition prior's means with the given log-variance.
Proposal<double> default_proposal(const Params& p, double log_var);

template <class T>
class Model {
 public:
  using Scalar = T;

  /// Without a proposal the transition prior is used (bootstrap filter).
  Model(const Theta<T>& theta, const Proposal<T>* proposal, const Eigen::MatrixXd& y)
      : th_(theta), prop_(proposal), y_(y) {
    if (static_cast<std::size_t>(y.cols()) != th_.dy) throw std::invalid_argument("observation width != dy");
  }

  std::size_t num_steps() const { return static_cast<std::size_t>(y_.rows()); }
  std::size_t state_dim() const { return th_.dx; }
  std::size_t noise_dim(std::size_t) const { return th_.dx; }

  void propose(std::size_t n, std::span<const T> parent, std::span<const double> eps,
               std::span<T> out) const {
    using std::exp;
    using std::sqrt;
    const std::size_t dx = th_.dx;
    if (!prop_) {
      if (parent.empty()) {
        for (std::size_t i = 0; i < dx; ++i) out[i] = th_.A0[i] + sqrt(th_.sx0_diag[i]) * eps[i];
        return;
      }
      for (std::size_t i = 0; i < dx; ++i) {
        T m(0.0);
        for (std::size_t j = 0; j < dx; ++j) m = m + th_.A[i * dx + j] * parent[j];
        double noise = 0.0;
        for (std::size_t j = 0; j <= i; ++j) noise += th_.sx_chol[i * dx + j] * eps[j];
        out[i] = m + noise;
      }
      return;
    }
    for (std::size_t i = 0; i < dx; ++i) {
      const T m = proposal_mean(n, parent, i);
      const T& lv = parent.empty() ? prop_->log_var0[i] : prop_->log_var[i];
      out[i] = m + exp(0.5 * lv) * eps[i];
    }
  }

  T log_proposal(std::size_t n, std::span<const T> parent, std::span<const T> x) const {
    if (!prop_) return log_transition(n, parent, x);
    T lp(0.0);
    for (std::size_t i = 0; i < th_.dx; ++i) {
      const T& lv = parent.empty() ? prop_->log_var0[i] : prop_->log_var[i];
      lp = lp + normal_logpdf_logsd(x[i], proposal_mean(n, parent, i), T(0.5 * lv));
    }
    return lp;
  }

  T log_transition(std::size_t, std::span<const T> parent, std::span<const T> x) const {
    const std::size_t dx = th_.dx;
    if (parent.empty()) {
      T lp(0.0);
      for (std::size_t i = 0; i < dx; ++i) lp = lp + normal_logpdf(x[i], th_.A0[i], th_.sx0_diag[i]);
      return lp;
    }
    std::vector<T> mean(dx, T(0.0));
    for (std::size_t i = 0; i < dx; ++i) {
      for (std::size_t j = 0; j < dx; ++j) mean[i] = mean[i] + th_.A[i * dx + j] * parent[j];
    }
    return mvn_logpdf_chol<T, double>(x, mean, th_.sx_chol, dx);
  }

  T log_observation(std::size_t n, std::span<const T> x) const {
    const std::size_t dx = th_.dx;
    T lp(0.0);
    for (std::size_t r = 0; r < th_.dy; ++r) {
      T m(0.0);
      for (std::size_t j = 0; j < dx; ++j) m = m + th_.B[r * dx + j] * x[j];
      lp = lp + normal_logpdf(T(y_(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(r))), m,
                              th_.sy_diag[r]);
    }
    return lp;
  }

 private:
  T proposal_mean(std::size_t n, std::span<const T> parent, std::size_t i) const {
    const std::size_t dx = th_.dx;
    T m = parent.empty() ? prop_->A0[i] : T(0.0);
    if (!parent.empty()) {
      for (std::size_t j = 0; j < dx; ++j) m = m + prop_->A[i * dx + j] * parent[j];
    }
    for (std::size_t r = 0; r < th_.dy; ++r) {
      m = m + prop_->B[i * th_.dy + r] * y_(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(r));
    }
    return m;
  }

  const Theta<T>& th_;
  const Proposal<T>* prop_;
  const Eigen::MatrixXd& y_;
};

/// Training recipe for the 2-D AR model: θ = λ (normal factor, N(0,1)
/// prior), x_0 stationary, proposal with learned diagonal Aφ, Bφ and
/// log-variances.
class ArRecipe {
 public:
  /// `lambda_kind` is Normal (unconstrained) or TanhNormal, which keeps λ in
  /// (-1, 1) so the stationary initial variance stays defined.
  ArRecipe(std::vector<Eigen::MatrixXd> series, double lambda_init,
           FactorKind lambda_kind = FactorKind::Normal);

  std::size_t num_series() const { return series_.size(); }
  MeanFieldFamily initial_family() const;
  std::vector<Prior> priors() const { return {Prior::normal(0.0, 1.0)}; }
  std::vector<double> initial_proposal() const;
  std::vector<std::string> proposal_names() const;
  double evidence_scale(std::size_t) const { return 1.0; }

  template <class T>
  ParticleSystem<T> run(std::span<const T> theta, std::span<const T> phi, std::size_t s,
                        const SmcOptions& opts, SmcStreams& streams) const {
    Theta<T> th = make_theta(theta);
    Proposal<T> pr = make_proposal(phi);
    Model<T> model(th, &pr, series_.at(s));
    return run_smc(model, opts, streams);
  }

  template <class T>
  static Theta<T> make_theta(std::span<const T> theta) {
    const T lam = theta[0];
    Theta<T> th;
    th.dx = 2;
    th.dy = 1;
    th.A = {lam, T(0.0), T(0.0), lam};
    th.B = {T(1.0), T(1.0)};
    th.A0 = {T(0.0), T(0.0)};
    const T stat = 1.0 / (1.0 - lam * lam);
    th.sx0_diag = {stat, stat};
    th.sy_diag = {T(1.0)};
    th.sx_chol = {1.0, 0.0, 0.0, 1.0};
    return th;
  }

  // φ = (a_1, a_2, b_1, b_2, log_var_1, log_var_2, log_var0_1, log_var0_2);
  // Aφ = diag(a), Bφ = b, A0φ = 0.
  template <class T>
  static Proposal<T> make_proposal(std::span<const T> phi) {
    Proposal<T> p;
    p.A = {phi[0], T(0.0), T(0.0), phi[1]};
    p.B = {phi[2], phi[3]};
    p.A0 = {T(0.0), T(0.0)};
    p.log_var = {phi[4], phi[5]};
    p.log_var0 = {phi[6], phi[7]};
    return p;
  }

 private:
  std::vector<Eigen::MatrixXd> series_;
  double lambda_init_;
  FactorKind lambda_kind_;
};

/// Training recipe for the high-dimensional configuration: θ = (A, B,
/// diag Σy), Σx, Σx0, A0 known. Proposal Aφ (dense), Bφ, diagonal
/// log-variances.
class HighDimRecipe {
 public:
  HighDimRecipe(std::vector<Eigen::MatrixXd> series, const Params& known, double init_scale,
                std::uint64_t init_seed);

  std::size_t num_series() const { return series_.size(); }
  MeanFieldFamily initial_family() const { return family_; }
  std::vector<Prior> priors() const;
  std::vector<double> initial_proposal() const;
  std::vector<std::string> proposal_names() const;
  double evidence_scale(std::size_t) const { return 1.0; }

  /// Point parameters (Kalman scoring) from a θ vector.
  Params params_from_theta(std::span<const double> theta) const;

  template <class T>
  ParticleSystem<T> run(std::span<const T> theta, std::span<const T> phi, std::size_t s,
                        const SmcOptions& opts, SmcStreams& streams) const {
    Theta<T> th = make_theta(theta);
    Proposal<T> pr = make_proposal(phi);
    Model<T> model(th, &pr, series_.at(s));
    return run_smc(model, opts, streams);
  }

  template <class T>
  Theta<T> make_theta(std::span<const T> theta) const {
    const std::size_t dx = known_.dx(), dy = known_.dy();
    Theta<T> th;
    th.dx = dx;
    th.dy = dy;
    std::size_t o = 0;
    for (std::size_t i = 0; i < dx * dx; ++i) th.A.push_back(theta[o++]);
    for (std::size_t i = 0; i < dy * dx; ++i) th.B.push_back(theta[o++]);
    for (std::size_t i = 0; i < dy; ++i) th.sy_diag.push_back(theta[o++]);
    for (std::size_t i = 0; i < dx; ++i) {
      th.A0.push_back(T(known_.A0(static_cast<Eigen::Index>(i))));
      th.sx0_diag.push_back(T(known_.Sx0(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))));
    }
    th.sx_chol = sx_chol_;
    return th;
  }

  template <class T>
  Proposal<T> make_proposal(std::span<const T> phi) const {
    const std::size_t dx = known_.dx(), dy = known_.dy();
    Proposal<T> p;
    std::size_t o = 0;
    for (std::size_t i = 0; i < dx * dx; ++i) p.A.push_back(phi[o++]);
    for (std::size_t i = 0; i < dx * dy; ++i) p.B.push_back(phi[o++]);
    for (std::size_t i = 0; i < dx; ++i) p.log_var.push_back(phi[o++]);
    for (std::size_t i = 0; i < dx; ++i) p.log_var0.push_back(phi[o++]);
    p.A0.assign(dx, T(0.0));
    return p;
  }

 private:
  std::vector<Eigen::MatrixXd> series_;
  Params known_;
  std::vector<double> sx_chol_;
  MeanFieldFamily family_;
};

}  // namespace smcvi::lgss
