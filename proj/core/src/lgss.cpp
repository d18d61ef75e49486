#include "smcvi/lgss.hpp"

#include <cmath>

namespace smcvi::lgss {

namespace {

Eigen::MatrixXd chol_or_zero(const Eigen::MatrixXd& s) {
  if (s.isZero(0.0)) return Eigen::MatrixXd::Zero(s.rows(), s.cols());
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("covariance is not positive definite");
  return llt.matrixL();
}

Eigen::VectorXd std_normal(std::size_t n, RngStream& rng) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  return v;
}

}  // namespace

void Params::validate() const {
  const auto n = A.rows();
  if (A.cols() != n || B.cols() != n || Sx.rows() != n || Sx.cols() != n || Sx0.rows() != n ||
      Sx0.cols() != n || A0.size() != n || Sy.rows() != B.rows() || Sy.cols() != B.rows()) {
    throw std::invalid_argument("inconsistent LGSS dimensions");
  }
}

Simulation simulate(const Params& p, std::size_t horizon, RngStream& rng) {
  p.validate();
  const auto dx = static_cast<Eigen::Index>(p.dx());
  const auto dy = static_cast<Eigen::Index>(p.dy());
  const Eigen::MatrixXd lx = chol_or_zero(p.Sx);
  const Eigen::MatrixXd lx0 = chol_or_zero(p.Sx0);
  const Eigen::MatrixXd ly = chol_or_zero(p.Sy);
  const auto steps = static_cast<Eigen::Index>(horizon + 1);
  Simulation out{Eigen::MatrixXd(steps, dx), Eigen::MatrixXd(steps, dy)};
  Eigen::VectorXd x = p.A0 + lx0 * std_normal(p.dx(), rng);
  for (Eigen::Index n = 0; n < steps; ++n) {
    if (n > 0) x = p.A * x + lx * std_normal(p.dx(), rng);
    out.x.row(n) = x.transpose();
    out.y.row(n) = (p.B * x + ly * std_normal(p.dy(), rng)).transpose();
  }
  return out;
}

KalmanResult kalman_filter(const Params& p, const Eigen::MatrixXd& y) {
  p.validate();
  if (y.cols() != p.B.rows()) throw std::invalid_argument("observation width != dy");
  KalmanResult r;
  const double dy = static_cast<double>(p.dy());
  Eigen::VectorXd m = p.A0;
  Eigen::MatrixXd P = p.Sx0;
  for (Eigen::Index n = 0; n < y.rows(); ++n) {
    if (n > 0) {
      m = p.A * m;
      P = p.A * P * p.A.transpose() + p.Sx;
    }
    r.pred_mean.push_back(m);
    r.pred_cov.push_back(P);
    const Eigen::VectorXd v = y.row(n).transpose() - p.B * m;
    Eigen::MatrixXd S = p.B * P * p.B.transpose() + p.Sy;
    S = 0.5 * (S + S.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(S);
    if (llt.info() != Eigen::Success) {
      throw NumericError("innovation covariance not positive definite at step " + std::to_string(n));
    }
    const Eigen::MatrixXd L = llt.matrixL();
    const double logdet = 2.0 * L.diagonal().array().log().sum();
    const Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(v);
    r.loglik += -0.5 * (dy * kLog2Pi + logdet + z.squaredNorm());
    const Eigen::MatrixXd K = llt.solve(p.B * P).transpose();
    m = m + K * v;
    P = P - K * p.B * P;
    P = 0.5 * (P + P.transpose());
    r.filt_mean.push_back(m);
    r.filt_cov.push_back(P);
  }
  return r;
}

double kalman_loglik(const Params& p, const Eigen::MatrixXd& y) { return kalman_filter(p, y).loglik; }

std::vector<Gaussian> rts_smooth(const Params& p, const Eigen::MatrixXd& y) {
  const KalmanResult kf = kalman_filter(p, y);
  const std::size_t steps = kf.filt_mean.size();
  std::vector<Gaussian> out(steps);
  out[steps - 1] = {kf.filt_mean.back(), kf.filt_cov.back()};
  for (std::size_t n = steps - 1; n-- > 0;) {
    const Eigen::MatrixXd& Pf = kf.filt_cov[n];
    const Eigen::MatrixXd& Pp = kf.pred_cov[n + 1];
    const Eigen::MatrixXd G = Pp.ldlt().solve(p.A * Pf).transpose();
    out[n].mean = kf.filt_mean[n] + G * (out[n + 1].mean - kf.pred_mean[n + 1]);
    out[n].cov = Pf + G * (out[n + 1].cov - Pp) * G.transpose();
  }
  return out;
}

Eigen::Matrix4d two_step_precision(double lambda) {
  if (!(std::abs(lambda) < 1.0)) throw std::domain_error("two-step posterior needs |lambda| < 1");
  Eigen::Matrix4d q;
  q << 2, 1, -lambda, 0,
       1, 2, 0, -lambda,
       -lambda, 0, 2, 1,
       0, -lambda, 1, 2;
  return q;
}

Gaussian two_step_posterior(double lambda, double y0, double y1) {
  const Eigen::Matrix4d q = two_step_precision(lambda);
  Gaussian g;
  g.cov = q.inverse();
  g.mean = g.cov * Eigen::Vector4d(y0, y0, y1, y1);
  return g;
}

double gaussian_logpdf(const Gaussian& g, const Eigen::VectorXd& x) {
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  if (llt.info() != Eigen::Success) throw NumericError("covariance not positive definite");
  const Eigen::MatrixXd L = llt.matrixL();
  const Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(x - g.mean);
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + 2.0 * L.diagonal().array().log().sum() +
                 z.squaredNorm());
}

Params ar_params(double lambda) {
  if (!(std::abs(lambda) < 1.0)) throw std::domain_error("AR model needs |lambda| < 1");
  Params p;
  p.A = lambda * Eigen::MatrixXd::Identity(2, 2);
  p.B = Eigen::MatrixXd::Ones(1, 2);
  p.Sx = Eigen::MatrixXd::Identity(2, 2);
  p.Sx0 = Eigen::MatrixXd::Identity(2, 2) / (1.0 - lambda * lambda);
  p.Sy = Eigen::MatrixXd::Identity(1, 1);
  p.A0 = Eigen::VectorXd::Zero(2);
  return p;
}

Params highdim_params(std::size_t dx, std::size_t dy, double alpha, RngStream& rng) {
  const auto nx = static_cast<Eigen::Index>(dx);
  const auto ny = static_cast<Eigen::Index>(dy);
  Params p;
  p.A.resize(nx, nx);
  for (Eigen::Index i = 0; i < nx; ++i) {
    for (Eigen::Index j = 0; j < nx; ++j) {
      p.A(i, j) = std::pow(alpha, static_cast<double>(std::abs(i - j) + 1));
    }
  }
  p.B.resize(ny, nx);
  for (Eigen::Index i = 0; i < ny; ++i) {
    for (Eigen::Index j = 0; j < nx; ++j) p.B(i, j) = rng.normal();
  }
  p.Sx = Eigen::MatrixXd::Identity(nx, nx);
  p.Sx0 = Eigen::MatrixXd::Identity(nx, nx);
  p.Sy = Eigen::MatrixXd::Identity(ny, ny);
  p.A0 = Eigen::VectorXd::Zero(nx);
  return p;
}

Theta<double> theta_from_params(const Params& p) {
  p.validate();
  const std::size_t dx = p.dx(), dy = p.dy();
  Theta<double> th;
  th.dx = dx;
  th.dy = dy;
  for (std::size_t i = 0; i < dx; ++i) {
    for (std::size_t j = 0; j < dx; ++j) th.A.push_back(p.A(i, j));
  }
  for (std::size_t i = 0; i < dy; ++i) {
    for (std::size_t j = 0; j < dx; ++j) th.B.push_back(p.B(i, j));
  }
  for (std::size_t i = 0; i < dx; ++i) {
    th.A0.push_back(p.A0(i));
    th.sx0_diag.push_back(p.Sx0(i, i));
  }
  for (std::size_t i = 0; i < dy; ++i) th.sy_diag.push_back(p.Sy(i, i));
  const Eigen::MatrixXd L = chol_or_zero(p.Sx);
  for (std::size_t i = 0; i < dx; ++i) {
    for (std::size_t j = 0; j < dx; ++j) th.sx_chol.push_back(L(i, j));
  }
  return th;
}

Proposal<double> default_proposal(const Params& p, double log_var) {
  const std::size_t dx = p.dx(), dy = p.dy();
  Proposal<double> q;
  for (std::size_t i = 0; i < dx; ++i) {
    for (std::size_t j = 0; j < dx; ++j) q.A.push_back(p.A(i, j));
  }
  q.B.assign(dx * dy, 0.0);
  for (std::size_t i = 0; i < dx; ++i) q.A0.push_back(p.A0(i));
  q.log_var.assign(dx, log_var);
  q.log_var0.assign(dx, log_var);
  return q;
}

ArRecipe::ArRecipe(std::vector<Eigen::MatrixXd> series, double lambda_init, FactorKind lambda_kind)
    : series_(std::move(series)), lambda_init_(lambda_init), lambda_kind_(lambda_kind) {
  if (series_.empty()) throw std::invalid_argument("no training series");
  if (lambda_kind != FactorKind::Normal && lambda_kind != FactorKind::TanhNormal)
    throw std::invalid_argument("lambda factor must be normal or tanh-normal");
  if (!(std::abs(lambda_init) < 1.0)) throw std::invalid_argument("lambda_init must lie in (-1, 1)");
}

MeanFieldFamily ArRecipe::initial_family() const {
  return MeanFieldFamily(
      {Factor{"lambda", lambda_kind_, factor_inverse(lambda_kind_, lambda_init_), std::log(0.1)}});
}

std::vector<double> ArRecipe::initial_proposal() const {
  const double lv0 = -std::log(1.0 - lambda_init_ * lambda_init_);
  return {lambda_init_, lambda_init_, 0.0, 0.0, 0.0, 0.0, lv0, lv0};
}

std::vector<std::string> ArRecipe::proposal_names() const {
  return {"A_phi[0]", "A_phi[1]", "B_phi[0]", "B_phi[1]",
          "log_var[0]", "log_var[1]", "log_var0[0]", "log_var0[1]"};
}

HighDimRecipe::HighDimRecipe(std::vector<Eigen::MatrixXd> series, const Params& known,
                             double init_scale, std::uint64_t init_seed)
    : series_(std::move(series)), known_(known) {
  if (series_.empty()) throw std::invalid_argument("no training series");
  known_.validate();
  sx_chol_ = theta_from_params(known_).sx_chol;
  RngStream rng(init_seed);
  const std::size_t dx = known_.dx(), dy = known_.dy();
  std::vector<Factor> f;
  const double v0 = std::log(0.1);
  for (std::size_t i = 0; i < dx; ++i) {
    for (std::size_t j = 0; j < dx; ++j) {
      f.push_back({"A[" + std::to_string(i) + "," + std::to_string(j) + "]", FactorKind::Normal,
                   init_scale * rng.normal(), v0});
    }
  }
  for (std::size_t i = 0; i < dy; ++i) {
    for (std::size_t j = 0; j < dx; ++j) {
      f.push_back({"B[" + std::to_string(i) + "," + std::to_string(j) + "]", FactorKind::Normal,
                   init_scale * rng.normal(), v0});
    }
  }
  for (std::size_t i = 0; i < dy; ++i) {
    f.push_back({"Sy[" + std::to_string(i) + "]", FactorKind::LogNormal, 0.0, v0});
  }
  family_ = MeanFieldFamily(std::move(f));
}

std::vector<Prior> HighDimRecipe::priors() const {
  const std::size_t dx = known_.dx(), dy = known_.dy();
  std::vector<Prior> p;
  p.insert(p.end(), dx * dx, Prior::normal(0.0, 1.0));
  p.insert(p.end(), dx * dy, Prior::normal(0.0, 10.0));
  p.insert(p.end(), dy, Prior::inverse_gamma(0.01, 0.01));
  return p;
}

std::vector<double> HighDimRecipe::initial_proposal() const {
  const std::size_t dx = known_.dx(), dy = known_.dy();
  std::vector<double> phi;
  phi.insert(phi.end(), dx * dx, 0.0);
  phi.insert(phi.end(), dx * dy, 0.0);
  phi.insert(phi.end(), 2 * dx, 0.0);
  return phi;
}

std::vector<std::string> HighDimRecipe::proposal_names() const {
  const std::size_t dx = known_.dx(), dy = known_.dy();
  std::vector<std::string> names;
  for (std::size_t i = 0; i < dx * dx; ++i) names.push_back("A_phi[" + std::to_string(i) + "]");
  for (std::size_t i = 0; i < dx * dy; ++i) names.push_back("B_phi[" + std::to_string(i) + "]");
  for (std::size_t i = 0; i < dx; ++i) names.push_back("log_var[" + std::to_string(i) + "]");
  for (std::size_t i = 0; i < dx; ++i) names.push_back("log_var0[" + std::to_string(i) + "]");
  return names;
}

Params HighDimRecipe::params_from_theta(std::span<const double> theta) const {
  const auto dx = static_cast<Eigen::Index>(known_.dx());
  const auto dy = static_cast<Eigen::Index>(known_.dy());
  Params p = known_;
  std::size_t o = 0;
  for (Eigen::Index i = 0; i < dx; ++i) {
    for (Eigen::Index j = 0; j < dx; ++j) p.A(i, j) = theta[o++];
  }
  for (Eigen::Index i = 0; i < dy; ++i) {
    for (Eigen::Index j = 0; j < dx; ++j) p.B(i, j) = theta[o++];
  }
  p.Sy.setZero();
  for (Eigen::Index i = 0; i < dy; ++i) p.Sy(i, i) = theta[o++];
  return p;
}

}  // namespace smcvi::lgss
