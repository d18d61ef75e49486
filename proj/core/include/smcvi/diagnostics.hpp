#pragma once

// Extended-space identities and the conditional-SMC estimator of the
// marginal variational density of a latent path.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "smcvi/random.hpp"
#include "smcvi/smc.hpp"

namespace smcvi::diag {

/// log γ_θ(x) = log f(x_0) + Σ log f(x_n | x_{n−1}) + Σ log g(y_n | x_n)
/// for a flattened path [n][i].
template <StateSpaceModel Model>
double log_joint(const Model& model, std::span<const double> path) {
  const std::size_t d = model.state_dim();
  double lp = 0.0;
  for (std::size_t n = 0; n < model.num_steps(); ++n) {
    std::span<const double> x = path.subspan(n * d, d);
    std::span<const double> parent = n == 0 ? std::span<const double>{} : path.subspan((n - 1) * d, d);
    lp += model.log_transition(n, parent, x) + model.log_observation(n, x);
  }
  return lp;
}

/// log Ẑ_r for R conditional-SMC runs retaining `path` on lineage 0.
template <StateSpaceModel Model>
std::vector<double> csmc_log_evidence(const Model& model, std::span<const double> path, std::size_t particles,
                                      std::size_t repetitions, const RngStream& rng) {
  RetainedPath<double> retained;
  retained.states.assign(path.begin(), path.end());
  retained.lineage.assign(model.num_steps(), 0);
  std::vector<double> out;
  out.reserve(repetitions);
  for (std::size_t r = 0; r < repetitions; ++r) {
    SmcStreams streams(rng.child(r));
    out.push_back(run_csmc(model, particles, retained, streams, false).log_z);
  }
  return out;
}

struct DensityEstimate {
  double log_density = -std::numeric_limits<double>::infinity();
  double density = 0.0;
};

/// q(θ, x) ≈ q_ψ(θ)·γ_θ(x)·(1/R) Σ_r 1/Ẑ_r. `log_q_theta` is 0 for a
/// fixed θ. A zero γ_θ(x) returns 0 without running any CSMC.
template <StateSpaceModel Model>
DensityEstimate marginal_q_density(const Model& model, double log_q_theta, std::span<const double> path,
                                   std::size_t particles, std::size_t repetitions, const RngStream& rng) {
  DensityEstimate out;
  const double lg = log_joint(model, path);
  if (!(lg > -std::numeric_limits<double>::infinity())) return out;
  const auto lz = csmc_log_evidence(model, path, particles, repetitions, rng);
  std::vector<double> neg(lz.size());
  for (std::size_t r = 0; r < lz.size(); ++r) neg[r] = -lz[r];
  const double log_mean_inv = log_sum_exp(neg) - std::log(static_cast<double>(lz.size()));
  out.log_density = log_q_theta + lg + log_mean_inv;
  out.density = std::exp(out.log_density);
  return out;
}

/// log π̃ − log q_{ψ,φ} − (log Ẑ + log p(θ) − log q_ψ(θ) − log p(y)), with
/// π̃ and q_{ψ,φ} assembled term by term from the definitions of the
/// extended target and the sampler's density over every generated variable.
/// `sys` must come from an always-resampling run with history.
template <StateSpaceModel Model>
double extended_ratio_residual(const Model& model, const ParticleSystem<double>& sys, double log_prior_theta,
                               double log_q_theta, double log_py) {
  const std::size_t K = sys.num_particles;
  const std::size_t steps = sys.num_steps;
  const std::size_t l = sys.final_index();
  const auto b = trace_lineage(sys, l);
  const double log_k = std::log(static_cast<double>(K));

  // Sampler density: θ, every proposal draw, every ancestor draw, final index.
  double log_q = log_q_theta;
  // Target: posterior over the surviving path, uniform over labels, and the
  // sampler's conditional density for everything else.
  double log_pi = log_prior_theta - log_py - static_cast<double>(steps) * log_k;
  for (std::size_t n = 0; n < steps; ++n) {
    if (n > 0 && !sys.ancestry.resampled[n]) {
      throw std::invalid_argument("extended-space identity requires resampling at every step");
    }
    for (std::size_t k = 0; k < K; ++k) {
      std::span<const double> parent;
      double term = 0.0;
      if (n > 0) {
        const auto a = sys.ancestry.ancestors[n][k];
        parent = sys.state(n - 1, a);
        term += sys.log_norm_weight(n - 1, a);
      }
      term += model.log_proposal(n, parent, sys.state(n, k));
      log_q += term;
      if (k != b[n]) log_pi += term;
    }
    std::span<const double> parent = n == 0 ? std::span<const double>{} : sys.state(n - 1, b[n - 1]);
    log_pi += model.log_transition(n, parent, sys.state(n, b[n])) + model.log_observation(n, sys.state(n, b[n]));
  }
  log_q += sys.log_norm_weight(steps - 1, l);
  return log_pi - log_q - (sys.log_z + log_prior_theta - log_q_theta - log_py);
}

/// Sequential-VAE form of one bound sample along the surviving lineage:
///   Σ_n [log g(y_n|x_n^{b_n}) − log W_n^{b_n} + log f(x_n^{b_n}|x_{n−1}^{b_{n−1}}) − log M_n(x_n^{b_n}|…)]
///   − (M+1) log K + log p(θ) − log q_ψ(θ)
/// minus `elbo_total`.
template <StateSpaceModel Model>
double vae_decomposition_residual(const Model& model, const ParticleSystem<double>& sys, double log_prior_theta,
                                  double log_q_theta, double elbo_total) {
  const std::size_t steps = sys.num_steps;
  const auto b = trace_lineage(sys, sys.final_index());
  double acc = 0.0;
  for (std::size_t n = 0; n < steps; ++n) {
    if (n > 0 && !sys.ancestry.resampled[n]) {
      throw std::invalid_argument("sequential-VAE identity requires resampling at every step");
    }
    const auto x = sys.state(n, b[n]);
    std::span<const double> parent = n == 0 ? std::span<const double>{} : sys.state(n - 1, b[n - 1]);
    acc += model.log_observation(n, x) - sys.log_norm_weight(n, b[n]) + model.log_transition(n, parent, x) -
           model.log_proposal(n, parent, x);
  }
  acc -= static_cast<double>(steps) * std::log(static_cast<double>(sys.num_particles));
  acc += log_prior_theta - log_q_theta;
  return acc - elbo_total;
}

struct GapEstimate {
  double kl_extended = 0.0;  // KL(q_{ψ,φ} ‖ π̃) at fixed θ
  double kl_marginal = 0.0;  // KL(q_{ψ,φ}(x) ‖ p(x|y)), nested estimate
  double gap = 0.0;
  double gap_se = 0.0;
};

/// Fixed-θ Monte Carlo estimate of both divergences. Each outer draw runs
/// one SMC (log Ẑ, surviving path x) and R conditional SMC runs on x; the
/// paired per-draw gap is −log Ẑ − log mean_r(1/Ẑ_r).
template <StateSpaceModel Model>
GapEstimate corollary_gap(const Model& model, double log_py, std::size_t particles, std::size_t outer,
                          std::size_t repetitions, const RngStream& rng) {
  GapEstimate g;
  double sum = 0.0, sum2 = 0.0, ext = 0.0, marg = 0.0;
  SmcOptions opts;
  opts.particles = particles;
  for (std::size_t o = 0; o < outer; ++o) {
    const RngStream orng = rng.child(o);
    SmcStreams streams(orng.child(0));
    const auto sys = run_smc(model, opts, streams);
    const auto b = trace_lineage(sys, sys.final_index());
    const auto path = lineage_path(sys, b);
    const auto lz = csmc_log_evidence(model, std::span<const double>(path), particles, repetitions, orng.child(1));
    std::vector<double> neg(lz.size());
    for (std::size_t r = 0; r < lz.size(); ++r) neg[r] = -lz[r];
    const double log_mean_inv = log_sum_exp(neg) - std::log(static_cast<double>(lz.size()));
    const double e = log_py - sys.log_z;
    const double m = log_mean_inv + log_py;
    ext += e;
    marg += m;
    sum += e - m;
    sum2 += (e - m) * (e - m);
  }
  const double n = static_cast<double>(outer);
  g.kl_extended = ext / n;
  g.kl_marginal = marg / n;
  g.gap = sum / n;
  g.gap_se = std::sqrt(std::max(0.0, sum2 / n - g.gap * g.gap) / std::max(1.0, n - 1.0));
  return g;
}

struct GridAxis {
  std::string name;
  std::size_t index = 0;  // position in the flattened path
  double lo = 0.0, hi = 1.0;
  std::size_t points = 30;

  double at(std::size_t i) const {
    return points <= 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
};

struct DensityGrid {
  GridAxis x, y;
  std::vector<double> fixed;   // full path; the two axis coordinates are overwritten
  std::vector<double> values;  // row-major [ix][iy]

  double& at(std::size_t ix, std::size_t iy) { return values[ix * y.points + iy]; }
  double at(std::size_t ix, std::size_t iy) const { return values[ix * y.points + iy]; }
};

/// Evaluates `density(path)` on the grid; point (ix, iy) receives
/// rng.child(ix·ny + iy) so points are independent of evaluation order.
DensityGrid evaluate_grid(const GridAxis& x, const GridAxis& y, std::vector<double> fixed,
                          const std::function<double(std::span<const double>, const RngStream&)>& density,
                          const RngStream& rng);

}  // namespace smcvi::diag
