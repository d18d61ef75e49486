#pragma once

// Sequential Monte Carlo sampler over a generic state-space model, with the
// running log-evidence estimate carried in the model's scalar type so that
// gradients flow through it when the scalar is ad::Var.
//
// A model exposes, for step n = 0..M:
//   propose(n, parent, eps, out)   reparameterized draw x_n = h(parent, eps)
//   log_proposal(n, parent, x)     log M_n(x | parent)
//   log_transition(n, parent, x)   log f(x | parent); log f(x_0) when parent is empty
//   log_observation(n, x)          log g(y_n | x)
// An empty parent span marks the initial step. Particle and lineage indices
// are 0-based.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "smcvi/random.hpp"
#include "smcvi/resampling.hpp"
#include "smcvi/scalar.hpp"

namespace smcvi {

class DegenerateFilterError : public std::runtime_error {
 public:
  explicit DegenerateFilterError(std::size_t step)
      : std::runtime_error("degenerate particle weights at step " + std::to_string(step)),
        step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class M>
concept StateSpaceModel =
    requires(const M& m, std::size_t n, std::span<const typename M::Scalar> parent,
             std::span<const double> eps, std::span<typename M::Scalar> out) {
      typename M::Scalar;
      { m.num_steps() } -> std::convertible_to<std::size_t>;
      { m.state_dim() } -> std::convertible_to<std::size_t>;
      { m.noise_dim(n) } -> std::convertible_to<std::size_t>;
      m.propose(n, parent, eps, out);
      { m.log_proposal(n, parent, parent) } -> std::same_as<typename M::Scalar>;
      { m.log_transition(n, parent, parent) } -> std::same_as<typename M::Scalar>;
      { m.log_observation(n, parent) } -> std::same_as<typename M::Scalar>;
    };

/// Discrete outcomes of a run: per-step ancestor indices (empty at a step
/// with no previous generation), whether each step resampled, and the final
/// index. Feeding a record back freezes the graph topology.
struct AncestryRecord {
  std::vector<std::vector<std::uint32_t>> ancestors;
  std::vector<std::uint8_t> resampled;
  std::uint32_t final_index = 0;
};

/// Particles carried in from an earlier run (e.g. the previous event batch).
template <class T>
struct InitialParticles {
  std::size_t dim = 0;
  std::vector<T> states;                 // [k][i]
  std::vector<double> log_norm_weights;  // log W^k, normalized
};

/// Path clamped by conditional SMC, with its lineage b_{0:M}.
template <class T>
struct RetainedPath {
  std::vector<T> states;  // [n][i]
  std::vector<std::uint32_t> lineage;
};

struct SmcOptions {
  std::size_t particles = 1;
  ResamplingPolicy policy{};
  bool keep_history = true;
  const AncestryRecord* frozen = nullptr;
};

template <class T>
struct ParticleSystem {
  std::size_t num_particles = 0;
  std::size_t state_dim = 0;
  std::size_t num_steps = 0;
  bool history = true;

  // With history: [n][k][i] and [n][k]. Without: final generation only.
  std::vector<T> states;
  std::vector<T> log_weights;
  std::vector<T> log_norm_weights;

  std::vector<T> log_z_increments;
  T log_z{0.0};
  AncestryRecord ancestry;

  std::size_t stored_step(std::size_t n) const {
    if (history) return n;
    if (n + 1 != num_steps) throw std::out_of_range("particle history was not kept");
    return 0;
  }
  std::span<const T> state(std::size_t n, std::size_t k) const {
    return {states.data() + (stored_step(n) * num_particles + k) * state_dim, state_dim};
  }
  const T& log_weight(std::size_t n, std::size_t k) const {
    return log_weights[stored_step(n) * num_particles + k];
  }
  const T& log_norm_weight(std::size_t n, std::size_t k) const {
    return log_norm_weights[stored_step(n) * num_particles + k];
  }
  std::vector<double> normalized_weights(std::size_t n) const {
    std::vector<double> w(num_particles);
    for (std::size_t k = 0; k < num_particles; ++k) w[k] = std::exp(value(log_norm_weight(n, k)));
    return w;
  }
  double ess(std::size_t n) const {
    std::vector<double> lw(num_particles);
    for (std::size_t k = 0; k < num_particles; ++k) lw[k] = value(log_norm_weight(n, k));
    return effective_sample_size(lw);
  }
  std::uint32_t final_index() const { return ancestry.final_index; }
};

/// Step-at-a-time SMC. run_smc() and run_csmc() drive it to completion;
/// streaming predictors call step() one observation at a time.
template <StateSpaceModel Model>
class ParticleFilter {
 public:
  using T = typename Model::Scalar;

  ParticleFilter(const Model& model, SmcOptions options, SmcStreams& streams,
                 const InitialParticles<T>* initial = nullptr,
                 const RetainedPath<T>* retained = nullptr)
      : model_(model),
        opts_(options),
        streams_(streams),
        retained_(retained),
        k_(options.particles),
        d_(model.state_dim()) {
    if (k_ == 0) throw std::invalid_argument("particle count must be at least 1");
    if (model.num_steps() == 0) throw std::invalid_argument("observation sequence is empty");
    sys_.num_particles = k_;
    sys_.state_dim = d_;
    sys_.history = opts_.keep_history;
    if (initial) {
      if (initial->dim != d_ || initial->states.size() != k_ * d_ ||
          initial->log_norm_weights.size() != k_) {
        throw std::invalid_argument("initial particles do not match particle count or state size");
      }
      prev_states_ = initial->states;
      prev_logw_.assign(initial->log_norm_weights.begin(), initial->log_norm_weights.end());
      has_prev_ = true;
    }
    if (retained_) {
      const std::size_t steps = model.num_steps();
      if (retained_->states.size() != steps * d_ || retained_->lineage.size() != steps) {
        throw std::invalid_argument("retained path must cover every step");
      }
      for (auto b : retained_->lineage) {
        if (b >= k_) throw std::out_of_range("lineage index out of range");
      }
    }
  }

  bool done() const { return n_ == model_.num_steps(); }
  std::size_t steps_taken() const { return n_; }

  void step() {
    if (done()) throw std::logic_error("particle filter already consumed every observation");
    const std::size_t n = n_;
    const double log_k = std::log(static_cast<double>(k_));

    std::vector<std::uint32_t> anc;
    std::vector<T> incoming(k_, T(-log_k));
    bool resampled = false;
    if (has_prev_) {
      std::vector<double> lw(k_);
      for (std::size_t k = 0; k < k_; ++k) lw[k] = value(prev_logw_[k]);
      if (opts_.frozen) {
        resampled = opts_.frozen->resampled.at(n) != 0;
        anc = opts_.frozen->ancestors.at(n);
      } else if (retained_) {
        resampled = true;
        anc.resize(k_);
        const auto keep = retained_->lineage[n];
        const auto keep_parent = retained_->lineage[n - 1];
        auto draws = resample(ResamplingPolicy::Scheme::Multinomial, lw, k_ - 1, streams_.ancestry);
        std::size_t j = 0;
        for (std::size_t k = 0; k < k_; ++k) anc[k] = (k == keep) ? keep_parent : draws[j++];
      } else {
        resampled = should_resample(opts_.policy, lw);
        if (resampled) {
          anc = resample(opts_.policy.scheme, lw, k_, streams_.ancestry);
        }
      }
      if (!resampled) {
        anc.resize(k_);
        for (std::size_t k = 0; k < k_; ++k) anc[k] = static_cast<std::uint32_t>(k);
        for (std::size_t k = 0; k < k_; ++k) incoming[k] = prev_logw_[k];
      }
    }

    std::vector<T> states(k_ * d_, T(0.0));
    std::vector<T> logw(k_);
    std::vector<double> eps;
    for (std::size_t k = 0; k < k_; ++k) {
      std::span<const T> parent;
      if (has_prev_) parent = {prev_states_.data() + anc[k] * d_, d_};
      std::span<T> x{states.data() + k * d_, d_};
      if (retained_ && k == retained_->lineage[n]) {
        for (std::size_t i = 0; i < d_; ++i) x[i] = retained_->states[n * d_ + i];
      } else {
        eps.resize(model_.noise_dim(n));
        for (auto& e : eps) e = streams_.noise.normal();
        model_.propose(n, parent, eps, x);
        for (std::size_t i = 0; i < d_; ++i) {
          if (std::isnan(value(x[i]))) {
            std::ostringstream os;
            os << "NaN in proposal sample at step " << n << ", particle " << k;
            throw NumericError(os.str());
          }
        }
      }
      std::span<const T> xc{states.data() + k * d_, d_};
      const T log_alpha = model_.log_transition(n, parent, xc) + model_.log_observation(n, xc) -
                          model_.log_proposal(n, parent, xc);
      logw[k] = incoming[k] + log_alpha;
    }

    const T lse = log_sum_exp(std::span<const T>(logw));
    if (!std::isfinite(value(lse))) throw DegenerateFilterError(n);
    std::vector<T> logW(k_);
    for (std::size_t k = 0; k < k_; ++k) logW[k] = logw[k] - lse;

    sys_.log_z = sys_.log_z + lse;
    sys_.log_z_increments.push_back(lse);
    sys_.ancestry.ancestors.push_back(has_prev_ ? anc : std::vector<std::uint32_t>{});
    sys_.ancestry.resampled.push_back(resampled ? 1 : 0);
    if (opts_.keep_history) {
      sys_.states.insert(sys_.states.end(), states.begin(), states.end());
      sys_.log_weights.insert(sys_.log_weights.end(), logw.begin(), logw.end());
      sys_.log_norm_weights.insert(sys_.log_norm_weights.end(), logW.begin(), logW.end());
    } else {
      sys_.log_weights = logw;
      sys_.log_norm_weights = logW;
    }
    prev_states_ = std::move(states);
    prev_logw_ = std::move(logW);
    has_prev_ = true;
    ++n_;
    sys_.num_steps = n_;
  }

  /// Current generation, after the most recent step.
  std::span<const T> current_state(std::size_t k) const { return {prev_states_.data() + k * d_, d_}; }
  const T& current_log_norm_weight(std::size_t k) const { return prev_logw_[k]; }
  const ParticleSystem<T>& system() const { return sys_; }

  InitialParticles<T> carry() const {
    InitialParticles<T> out;
    out.dim = d_;
    out.states = prev_states_;
    out.log_norm_weights.resize(k_);
    for (std::size_t k = 0; k < k_; ++k) out.log_norm_weights[k] = value(prev_logw_[k]);
    return out;
  }

  /// Draws the final index L ~ W_M and returns the completed system.
  ParticleSystem<T> finish() {
    while (!done()) step();
    if (!opts_.keep_history) sys_.states = prev_states_;
    if (opts_.frozen) {
      sys_.ancestry.final_index = opts_.frozen->final_index;
    } else if (retained_) {
      sys_.ancestry.final_index = retained_->lineage.back();
    } else {
      std::vector<double> lw(k_);
      for (std::size_t k = 0; k < k_; ++k) lw[k] = value(prev_logw_[k]);
      sys_.ancestry.final_index = sample_index(lw, streams_.ancestry);
    }
    return std::move(sys_);
  }

 private:
  const Model& model_;
  SmcOptions opts_;
  SmcStreams& streams_;
  const RetainedPath<T>* retained_;
  std::size_t k_;
  std::size_t d_;
  std::size_t n_ = 0;
  bool has_prev_ = false;
  std::vector<T> prev_states_;
  std::vector<T> prev_logw_;
  ParticleSystem<T> sys_;
};

template <StateSpaceModel Model>
ParticleSystem<typename Model::Scalar> run_smc(
    const Model& model, const SmcOptions& options, SmcStreams& streams,
    const InitialParticles<typename Model::Scalar>* initial = nullptr) {
  ParticleFilter<Model> pf(model, options, streams, initial);
  return pf.finish();
}

/// Conditional SMC: particle lineage[n] at step n is clamped to the retained
/// value; the other K-1 particles are resampled (multinomially, every step)
/// and proposed as usual.
template <StateSpaceModel Model>
ParticleSystem<typename Model::Scalar> run_csmc(const Model& model, std::size_t particles,
                                                const RetainedPath<typename Model::Scalar>& retained,
                                                SmcStreams& streams, bool keep_history = true) {
  SmcOptions opts;
  opts.particles = particles;
  opts.policy = ResamplingPolicy::always();
  opts.keep_history = keep_history;
  ParticleFilter<Model> pf(model, opts, streams, nullptr, &retained);
  return pf.finish();
}

/// b_M = l, b_n = a_{n+1}^{b_{n+1}}.
template <class T>
std::vector<std::uint32_t> trace_lineage(const ParticleSystem<T>& sys, std::size_t l) {
  if (l >= sys.num_particles) throw std::out_of_range("final index out of range");
  const std::size_t steps = sys.num_steps;
  std::vector<std::uint32_t> b(steps);
  b[steps - 1] = static_cast<std::uint32_t>(l);
  for (std::size_t n = steps - 1; n-- > 0;) {
    b[n] = sys.ancestry.ancestors[n + 1][b[n + 1]];
  }
  return b;
}

/// Path (x_0^{b_0}, ..., x_M^{b_M}) flattened as [n][i].
template <class T>
std::vector<T> lineage_path(const ParticleSystem<T>& sys, std::span<const std::uint32_t> lineage) {
  std::vector<T> path;
  path.reserve(lineage.size() * sys.state_dim);
  for (std::size_t n = 0; n < lineage.size(); ++n) {
    auto x = sys.state(n, lineage[n]);
    path.insert(path.end(), x.begin(), x.end());
  }
  return path;
}

}  // namespace smcvi
