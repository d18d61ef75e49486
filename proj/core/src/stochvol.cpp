#include "smcvi/stochvol.hpp"

#include <cmath>

namespace smcvi::sv {

Simulation simulate(const Params<double>& p, std::size_t horizon, RngStream& rng) {
  const std::size_t d = p.dim;
  const auto steps = static_cast<Eigen::Index>(horizon + 1);
  const auto dd = static_cast<Eigen::Index>(d);
  Simulation out{Eigen::MatrixXd(steps, dd), Eigen::MatrixXd(steps, dd)};
  const auto sigma = covariance_from_chol<double>(p.L, d);
  const auto s0 = lyapunov_stationary<double>(p.a, sigma, d);
  std::vector<double> chol0;
  if (!cholesky<double>(s0, d, chol0)) throw NumericError("stationary covariance not positive definite");
  std::vector<double> x(d), eps(d);
  for (Eigen::Index n = 0; n < steps; ++n) {
    for (auto& e : eps) e = rng.normal();
    const std::vector<double>& chol = n == 0 ? chol0 : p.L;
    std::vector<double> next(d);
    for (std::size_t i = 0; i < d; ++i) {
      double m = n == 0 ? p.mu[i] : p.mu[i] + p.a[i] * (x[i] - p.mu[i]);
      for (std::size_t j = 0; j <= i; ++j) m += chol[i * d + j] * eps[j];
      next[i] = m;
    }
    x = next;
    for (std::size_t i = 0; i < d; ++i) {
      out.x(n, static_cast<Eigen::Index>(i)) = x[i];
      out.y(n, static_cast<Eigen::Index>(i)) = std::exp(0.5 * x[i]) * rng.normal();
    }
  }
  return out;
}

std::size_t theta_size(std::size_t dim) { return 3 * dim + dim * (dim - 1) / 2; }

std::vector<double> theta_from_params(const Params<double>& p) {
  const std::size_t d = p.dim;
  std::vector<double> t(p.mu);
  t.insert(t.end(), p.a.begin(), p.a.end());
  for (std::size_t i = 1; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) t.push_back(p.L[i * d + j]);
  }
  for (std::size_t i = 0; i < d; ++i) t.push_back(p.L[i * d + i]);
  return t;
}

MeanFieldFamily default_family(const Eigen::MatrixXd& y, double a_init) {
  const auto d = static_cast<std::size_t>(y.cols());
  const double v0 = std::log(0.1);
  std::vector<Factor> f;
  for (std::size_t i = 0; i < d; ++i) {
    const auto col = y.col(static_cast<Eigen::Index>(i));
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / std::max<double>(1.0, static_cast<double>(col.size() - 1));
    f.push_back({"mu[" + std::to_string(i) + "]", FactorKind::Normal, std::log(std::sqrt(var)), v0});
  }
  const double logit_a = std::log(a_init) - std::log1p(-a_init);
  for (std::size_t i = 0; i < d; ++i) {
    f.push_back({"a[" + std::to_string(i) + "]", FactorKind::SigmoidNormal, logit_a, v0});
  }
  for (std::size_t i = 1; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      f.push_back({"L[" + std::to_string(i) + "," + std::to_string(j) + "]", FactorKind::Normal, 0.0, v0});
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    f.push_back({"L[" + std::to_string(i) + "," + std::to_string(i) + "]", FactorKind::LogNormal,
                 std::log(0.2), v0});
  }
  return MeanFieldFamily(std::move(f));
}

std::vector<Prior> default_priors(std::size_t dim) {
  std::vector<Prior> p;
  p.insert(p.end(), dim, Prior::normal(0.0, 10.0));
  p.insert(p.end(), dim, Prior::uniform(0.0, 1.0));
  p.insert(p.end(), dim * (dim - 1) / 2, Prior::normal(0.0, 10.0));
  p.insert(p.end(), dim, Prior::log_normal(0.0, 10.0));
  return p;
}

Recipe::Recipe(std::vector<Eigen::MatrixXd> series, double proposal_log_var)
    : series_(std::move(series)), proposal_log_var_(proposal_log_var) {
  if (series_.empty()) throw std::invalid_argument("no training series");
  dim_ = static_cast<std::size_t>(series_.front().cols());
}

std::vector<double> Recipe::initial_proposal() const {
  std::vector<double> phi(dim_, proposal_log_var_);
  phi.insert(phi.end(), dim_, proposal_log_var_ - std::log(1.0 - 0.81));
  return phi;
}

double predictive_loglik(const ThetaSource& source, std::span<const double> phi, const Eigen::MatrixXd& y,
                         std::size_t m, const PredictiveOptions& opts, RngStream& rng) {
  const std::size_t p = opts.steps_ahead;
  if (p != 1 && p != 2) throw std::invalid_argument("predictive horizon must be 1 or 2");
  if (m + p >= static_cast<std::size_t>(y.rows())) throw std::out_of_range("m + p beyond the observations");
  if (opts.samples == 0 || opts.particles == 0) throw std::invalid_argument("S and K must be positive");
  const auto d = static_cast<std::size_t>(y.cols());
  const Eigen::MatrixXd head = y.topRows(static_cast<Eigen::Index>(m + 1));
  const auto target = static_cast<Eigen::Index>(m + p);

  std::vector<double> terms;
  terms.reserve(opts.samples * opts.particles);
  for (std::size_t s = 0; s < opts.samples; ++s) {
    RngStream srng = rng.child(s);
    std::vector<double> theta;
    if (source.family) {
      RngStream trng = srng.child(0);
      theta = source.family->sample(trng).theta;
    } else {
      theta = source.fixed;
    }
    const Params<double> par = params_from_theta<double>(theta, d);
    std::optional<Proposal<double>> q;
    if (!phi.empty()) q = Recipe::make_proposal<double>(phi, d);
    Model<double> model(par, q ? &*q : nullptr, head);
    SmcOptions so;
    so.particles = opts.particles;
    so.policy = opts.policy;
    so.keep_history = false;
    SmcStreams streams(srng.child(1));
    ParticleFilter<Model<double>> pf(model, so, streams);
    while (!pf.done()) pf.step();

    RngStream prng = srng.child(2);
    std::vector<double> x(d), next(d), eps(d);
    for (std::size_t k = 0; k < opts.particles; ++k) {
      auto cur = pf.current_state(k);
      x.assign(cur.begin(), cur.end());
      for (std::size_t step = 0; step < p; ++step) {
        for (auto& e : eps) e = prng.normal();
        for (std::size_t i = 0; i < d; ++i) {
          double v = par.mu[i] + par.a[i] * (x[i] - par.mu[i]);
          for (std::size_t j = 0; j <= i; ++j) v += par.L[i * d + j] * eps[j];
          next[i] = v;
        }
        x = next;
        // An intermediate y_{m+1} would be drawn here; the state recursion
        // does not depend on it, so it is not materialized.
      }
      double lg = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double yi = y(target, static_cast<Eigen::Index>(i));
        lg -= 0.5 * (kLog2Pi + x[i] + yi * yi * std::exp(-x[i]));
      }
      terms.push_back(pf.current_log_norm_weight(k) + lg);
    }
  }
  return log_sum_exp(terms) - std::log(static_cast<double>(opts.samples));
}

double predictive_sweep(const ThetaSource& source, std::span<const double> phi, const Eigen::MatrixXd& y,
                        std::size_t window, const PredictiveOptions& opts, RngStream& rng) {
  const auto rows = static_cast<std::size_t>(y.rows());
  const std::size_t p = opts.steps_ahead;
  if (window == 0 || rows < p + window) throw std::invalid_argument("series too short for the sweep window");
  double acc = 0.0;
  for (std::size_t w = 0; w < window; ++w) {
    const std::size_t m = rows - 1 - p - w;
    RngStream r = rng.child(m);
    acc += predictive_loglik(source, phi, y, m, opts, r);
  }
  return acc / static_cast<double>(window);
}

}  // namespace smcvi::sv
