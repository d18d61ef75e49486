#pragma once

// Stochastic maximization of the SMC variational bound
//   L(ψ,φ) = E_{q_ψ(θ)}[ E[log Ẑ(θ,φ)] + log p(θ) − log q_ψ(θ) ].
//
// A recipe binds a model family to data. It provides
//   initial_family(), initial_proposal(), priors(), num_series(),
//   evidence_scale(s) and
//   template <class T> ParticleSystem<T> run(theta, phi, s, SmcOptions, SmcStreams&).
// Optionally `bool sequential_series() const` makes the trainer visit series
// in order (iteration mod S) instead of drawing them uniformly.

#include <cmath>
#include <functional>
#include <iostream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "smcvi/autodiff.hpp"
#include "smcvi/optim.hpp"
#include "smcvi/random.hpp"
#include "smcvi/smc.hpp"
#include "smcvi/variational.hpp"

namespace smcvi {

enum class FitMode { Vb, Em };

const char* fit_mode_name(FitMode mode);
FitMode parse_fit_mode(const std::string& name);

struct TrainConfig {
  FitMode mode = FitMode::Vb;
  std::size_t particles = 4;
  AdamConfig adam{};
  bool natural_gradient = false;
  std::size_t iterations = 1000;
  std::uint64_t seed = 1;
  ResamplingPolicy policy = ResamplingPolicy::always();
  /// Series drawn per step (with replacement); 0 uses every series once.
  std::size_t series_subsample = 0;
  std::size_t log_every = 50;
  /// Adds the score-function term for the resampling distribution.
  bool score_term = false;

  void validate() const;
};

struct ElboSample {
  double log_z = 0.0;
  double log_prior_minus_log_q = 0.0;
  double total = 0.0;
};

struct ElboGradient {
  ElboSample sample;
  std::vector<double> grad_psi;  // VB: (mu..., v...), EM: (mu...)
  std::vector<double> grad_phi;
};

struct TrainState {
  MeanFieldFamily family;
  std::vector<double> phi;
  AdamState adam;
  std::uint64_t iteration = 0;
};

struct TracePoint {
  std::uint64_t iteration = 0;
  double elbo = 0.0;
  double log_z = 0.0;
  double kl_term = 0.0;  // log q − log p at the shared draw
};

struct FitResult {
  TrainState state;
  std::vector<TracePoint> trace;
  std::vector<TrainState> checkpoints;
};

namespace detail {

inline constexpr std::uint64_t kEtaKey = 1;
inline constexpr std::uint64_t kSeriesKey = 2;
inline constexpr std::uint64_t kSmcKey = 3;

template <class R>
bool sequential_series(const R& r) {
  if constexpr (requires { r.sequential_series(); }) {
    return r.sequential_series();
  } else {
    return false;
  }
}

/// Σ_n Σ_k log W_{n-1}^{a_n^k} over resampled steps: the log-probability of
/// the drawn ancestry.
template <class T>
T log_ancestry_probability(const ParticleSystem<T>& sys) {
  T acc(0.0);
  for (std::size_t n = 1; n < sys.num_steps; ++n) {
    if (!sys.ancestry.resampled[n]) continue;
    const auto& a = sys.ancestry.ancestors[n];
    for (std::size_t k = 0; k < sys.num_particles; ++k) acc = acc + sys.log_norm_weight(n - 1, a[k]);
  }
  return acc;
}

}  // namespace detail

/// Series visited at a given iteration and their estimator weights S/B.
template <class R>
std::vector<std::size_t> choose_series(const R& recipe, const TrainConfig& cfg, std::uint64_t iteration,
                                       RngStream& rng) {
  const std::size_t s_count = recipe.num_series();
  std::vector<std::size_t> out;
  if (detail::sequential_series(recipe)) {
    out.push_back(static_cast<std::size_t>(iteration % s_count));
    return out;
  }
  if (cfg.series_subsample == 0) {
    for (std::size_t s = 0; s < s_count; ++s) out.push_back(s);
    return out;
  }
  for (std::size_t b = 0; b < cfg.series_subsample; ++b) {
    out.push_back(static_cast<std::size_t>(rng.next_u64() % s_count));
  }
  return out;
}

/// Single-sample bound estimate and its gradient. `rng` is the iteration's
/// stream; the same stream reproduces the same sample.
template <class R>
ElboGradient elbo_step(const R& recipe, const MeanFieldFamily& family, std::span<const double> phi,
                       const TrainConfig& cfg, std::uint64_t iteration, const RngStream& rng) {
  using ad::Var;
  const std::size_t nth = family.size();
  const bool vb = cfg.mode == FitMode::Vb;
  // One tape per thread, cleared per call: the graph is rebuilt every step
  // but its storage is not reallocated.
  thread_local ad::Tape tape;
  tape.clear();
  std::vector<Var> mu, lsd, ph;
  for (std::size_t i = 0; i < nth; ++i) mu.push_back(tape.parameter(family[i].mu));
  if (vb) {
    for (std::size_t i = 0; i < nth; ++i) lsd.push_back(tape.parameter(family[i].v));
  }
  for (double p : phi) ph.push_back(tape.parameter(p));

  std::vector<Var> theta;
  Var prior_term(0.0);
  const auto kinds = family.kinds();
  if (vb) {
    RngStream eta_rng = rng.child(detail::kEtaKey);
    std::vector<double> eta(nth);
    for (auto& e : eta) e = eta_rng.normal();
    auto draw = reparam_draw<Var>(kinds, mu, lsd, eta);
    theta = std::move(draw.theta);
    const auto priors = recipe.priors();
    Var lp(0.0);
    for (std::size_t i = 0; i < nth; ++i) lp = lp + log_prior(priors.at(i), theta[i]);
    if (!std::isfinite(lp.value())) {
      throw NumericError("non-finite ELBO: prior term is " + std::to_string(lp.value()) +
                         " (θ outside prior support)");
    }
    prior_term = lp - draw.log_q;
  } else {
    for (std::size_t i = 0; i < nth; ++i) theta.push_back(factor_transform(kinds[i], mu[i]));
  }

  RngStream series_rng = rng.child(detail::kSeriesKey);
  const auto chosen = choose_series(recipe, cfg, iteration, series_rng);
  const double scale = detail::sequential_series(recipe) || cfg.series_subsample == 0
                           ? 1.0
                           : static_cast<double>(recipe.num_series()) / static_cast<double>(chosen.size());
  SmcOptions opts;
  opts.particles = cfg.particles;
  opts.policy = cfg.policy;
  opts.keep_history = cfg.score_term;
  Var log_z(0.0);
  Var score(0.0);
  for (std::size_t j = 0; j < chosen.size(); ++j) {
    SmcStreams streams(rng.child(detail::kSmcKey + j));
    ParticleSystem<Var> sys;
    try {
      sys = recipe.template run<Var>(std::span<const Var>(theta), std::span<const Var>(ph), chosen[j], opts,
                                     streams);
    } catch (const DegenerateFilterError& e) {
      throw NumericError(std::string("non-finite ELBO: particle weights, ") + e.what());
    }
    const double w = scale * recipe.evidence_scale(chosen[j]);
    log_z = log_z + w * sys.log_z;
    if (cfg.score_term) {
      score = score + w * stop_gradient(sys.log_z) * detail::log_ancestry_probability(sys);
    }
  }
  if (!std::isfinite(log_z.value())) throw NumericError("non-finite ELBO: particle weights");

  Var objective = log_z + prior_term;
  ElboGradient out;
  out.sample.log_z = log_z.value();
  out.sample.log_prior_minus_log_q = prior_term.value();
  out.sample.total = objective.value();
  if (cfg.score_term) {
    // The surrogate's value is not the bound; only its gradient is used.
    objective = objective + score - stop_gradient(score);
  }
  const auto g = tape.gradient(objective);
  const std::size_t npsi = vb ? 2 * nth : nth;
  out.grad_psi.assign(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(npsi));
  out.grad_phi.assign(g.begin() + static_cast<std::ptrdiff_t>(npsi), g.end());
  return out;
}

/// Value-only bound sample on the double path (no tape).
template <class R>
ElboSample elbo_value(const R& recipe, const MeanFieldFamily& family, std::span<const double> phi,
                      const TrainConfig& cfg, std::uint64_t iteration, const RngStream& rng) {
  const std::size_t nth = family.size();
  std::vector<double> theta;
  double prior_term = 0.0;
  const auto kinds = family.kinds();
  if (cfg.mode == FitMode::Vb) {
    RngStream eta_rng = rng.child(detail::kEtaKey);
    std::vector<double> eta(nth);
    for (auto& e : eta) e = eta_rng.normal();
    const auto m = family.mus();
    const auto s = family.log_sds();
    auto draw = reparam_draw<double>(kinds, m, s, eta);
    theta = draw.theta;
    const auto priors = recipe.priors();
    for (std::size_t i = 0; i < nth; ++i) prior_term += log_prior(priors.at(i), theta[i]);
    prior_term -= draw.log_q;
  } else {
    theta = family.location();
  }
  RngStream series_rng = rng.child(detail::kSeriesKey);
  const auto chosen = choose_series(recipe, cfg, iteration, series_rng);
  const double scale = detail::sequential_series(recipe) || cfg.series_subsample == 0
                           ? 1.0
                           : static_cast<double>(recipe.num_series()) / static_cast<double>(chosen.size());
  SmcOptions opts;
  opts.particles = cfg.particles;
  opts.policy = cfg.policy;
  opts.keep_history = false;
  double log_z = 0.0;
  for (std::size_t j = 0; j < chosen.size(); ++j) {
    SmcStreams streams(rng.child(detail::kSmcKey + j));
    auto sys = recipe.template run<double>(std::span<const double>(theta), phi, chosen[j], opts, streams);
    log_z += scale * recipe.evidence_scale(chosen[j]) * sys.log_z;
  }
  return {log_z, prior_term, log_z + prior_term};
}

template <class R>
TrainState initial_state(const R& recipe) {
  TrainState s;
  s.family = recipe.initial_family();
  s.phi = recipe.initial_proposal();
  return s;
}

/// Per-iteration hook: (state after the update, sample that produced it).
using FitCallback = std::function<void(const TrainState&, const ElboSample&)>;

/// Runs iterations [state.iteration, cfg.iterations). Iteration i draws from
/// RngStream(cfg.seed).child(i), so a resumed run continues bit-exactly.
template <class R>
FitResult fit(const R& recipe, const TrainConfig& cfg, std::optional<TrainState> resume = std::nullopt,
              const FitCallback& callback = {}) {
  cfg.validate();
  FitResult out;
  out.state = resume ? *resume : initial_state(recipe);
  TrainState& st = out.state;
  const RngStream root(cfg.seed);
  const bool vb = cfg.mode == FitMode::Vb;
  bool warned = false;
  for (; st.iteration < cfg.iterations; ++st.iteration) {
    const RngStream it_rng = root.child(st.iteration);
    const ElboGradient g = elbo_step(recipe, st.family, st.phi, cfg, st.iteration, it_rng);
    const std::size_t nth = st.family.size();

    std::vector<double> grad_psi = g.grad_psi;
    if (vb && cfg.natural_gradient) {
      std::vector<std::string> skipped;
      grad_psi = natural_gradient(st.family, std::span<const double>(g.grad_psi).subspan(0, nth),
                                  std::span<const double>(g.grad_psi).subspan(nth, nth), &skipped);
      if (!skipped.empty() && !warned) {
        std::cerr << "warning: natural gradient unavailable for sigmoid-normal factors; plain gradient used\n";
        warned = true;
      }
    }
    std::vector<double> params;
    std::vector<double> neg;
    for (std::size_t i = 0; i < nth; ++i) params.push_back(st.family[i].mu);
    if (vb) {
      for (std::size_t i = 0; i < nth; ++i) params.push_back(st.family[i].v);
    }
    params.insert(params.end(), st.phi.begin(), st.phi.end());
    for (double x : grad_psi) neg.push_back(-x);
    for (double x : g.grad_phi) neg.push_back(-x);
    adam_update(params, neg, st.adam, cfg.adam);
    for (std::size_t i = 0; i < nth; ++i) st.family[i].mu = params[i];
    std::size_t o = nth;
    if (vb) {
      for (std::size_t i = 0; i < nth; ++i) st.family[i].v = params[o++];
    }
    for (auto& p : st.phi) p = params[o++];

    out.trace.push_back({st.iteration, g.sample.total, g.sample.log_z, -g.sample.log_prior_minus_log_q});
    if (callback) {
      TrainState view = st;
      view.iteration = st.iteration + 1;
      callback(view, g.sample);
    }
    if (cfg.log_every > 0 && (st.iteration + 1) % cfg.log_every == 0) {
      TrainState cp = st;
      cp.iteration = st.iteration + 1;
      out.checkpoints.push_back(std::move(cp));
    }
  }
  return out;
}

}  // namespace smcvi
