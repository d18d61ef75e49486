#pragma once

// Stochastic non-linear Hawkes process as a discrete-time SSM.
//
// Intensities λ_t^i = h(μ_i + Σ_b e^{−β_b(t − T_n)} Z_n^{b,i}) with
// h(y) = ν·softplus(y/ν). At event n (mark c_n) a jump A_n ~ N(α_{c_n}, σ²_{c_n})
// is drawn and Z_n = e^{−β(T_n − T_{n−1})} Z_{n−1} + β A_n.
//
// SMC step j of a batch handles event g = begin + j. Its state is
// x_g = (Z_{g−1}, A_{g−1}) (x_0 = 0), so the observation density of event g
// depends only on the excitation left by earlier events. Vectors indexed by
// (b, i) use b·D + i; marks are 0-based in memory and 1-based in files.

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "smcvi/quadrature.hpp"
#include "smcvi/random.hpp"
#include "smcvi/scalar.hpp"
#include "smcvi/smc.hpp"
#include "smcvi/variational.hpp"

namespace smcvi::hawkes {

inline constexpr double kMinElapsed = 1e-6;
inline constexpr std::size_t kQuadraturePoints = 50;

struct Event {
  double t = 0.0;
  std::uint32_t mark = 0;
};
using EventStream = std::vector<Event>;

/// Throws std::invalid_argument unless times strictly increase and marks < dim.
void validate_stream(const EventStream& events, std::size_t dim);

template <class T>
struct Params {
  std::size_t D = 1;
  std::size_t B = 1;
  std::vector<T> mu;      // D
  std::vector<T> alpha;   // D × (B·D): row d is the jump mean caused by mark d
  std::vector<T> sigma2;  // D × (B·D)
  std::vector<T> beta;    // B, increasing
  T nu{0.1};

  std::size_t bd() const { return B * D; }
};

/// β_1 = e^{l_1}, β_b = β_{b−1} + e^{l_b}.
template <class T>
std::vector<T> betas_from_log_increments(std::span<const T> logs) {
  using std::exp;
  std::vector<T> beta;
  T acc(0.0);
  for (const T& l : logs) {
    acc = acc + exp(l);
    beta.push_back(acc);
  }
  return beta;
}

template <class T>
T link(const T& y, const T& nu) {
  return nu * softplus(y / nu);
}

/// λ^i at elapsed time s since the last event, given post-event excitation z.
template <class T>
T intensity_at(const Params<T>& p, std::span<const T> z, std::size_t i, double s) {
  using std::exp;
  T arg = p.mu[i];
  for (std::size_t b = 0; b < p.B; ++b) arg = arg + exp(-p.beta[b] * s) * z[b * p.D + i];
  return link(arg, p.nu);
}

/// Every component of λ_t, t ≥ t_prev. Throws std::invalid_argument if t < t_prev.
std::vector<double> intensity(const Params<double>& p, std::span<const double> z, double t_prev, double t);

/// Σ_i ∫ λ^i over elapsed time [kMinElapsed, dt] with the log-transformed
/// rule; 0 when dt ≤ kMinElapsed.
template <class T>
T compensator(const Params<T>& p, std::span<const T> z, double dt, const QuadratureRule& reference) {
  if (dt <= kMinElapsed) return T(0.0);
  QuadratureRule rule;
  log_transformed_rule(reference, kMinElapsed, dt, rule);
  T acc(0.0);
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    T tot(0.0);
    for (std::size_t i = 0; i < p.D; ++i) tot = tot + intensity_at(p, z, i, rule.nodes[q]);
    acc = acc + rule.weights[q] * tot;
  }
  return acc;
}

/// log λ^{c}_{t} − compensator, for excitation z left at the previous event.
/// A zero intensity gives −inf (and sets *zero_intensity if provided).
template <class T>
T log_observation_density(const Params<T>& p, std::span<const T> z, double dt, std::uint32_t mark,
                          const QuadratureRule& reference, bool* zero_intensity = nullptr) {
  using std::log;
  if (dt < 0.0) throw std::invalid_argument("event times must not decrease");
  const T lam = intensity_at(p, z, mark, dt);
  if (!(value(lam) > 0.0)) {
    if (zero_intensity) *zero_intensity = true;
    return T(kNegInf);
  }
  return log(lam) - compensator(p, z, dt, reference);
}

/// Shared 50-point Legendre reference rule.
const QuadratureRule& reference_rule();

/// Mark-indexed Gaussian proposal for the jumps: A ~ N(α̃_c, e^{2 s̃_c}).
template <class T>
struct Proposal {
  std::vector<T> alpha;   // D × (B·D)
  std::vector<T> log_sd;  // D × (B·D)
};

template <class T>
class Model {
 public:
  using Scalar = T;

  /// Steps cover events [begin, end). `origin` is the stream start time.
  Model(const Params<T>& p, const Proposal<T>* proposal, const EventStream& events, std::size_t begin,
        std::size_t end, double origin = 0.0)
      : p_(p), prop_(proposal), ev_(events), begin_(begin), end_(end), origin_(origin) {
    if (begin >= end || end > events.size()) throw std::invalid_argument("empty or out-of-range event batch");
  }

  std::size_t num_steps() const { return end_ - begin_; }
  std::size_t state_dim() const { return 2 * p_.bd(); }
  std::size_t noise_dim(std::size_t) const { return p_.bd(); }

  void propose(std::size_t j, std::span<const T> parent, std::span<const double> eps, std::span<T> out) const {
    using std::exp;
    using std::sqrt;
    const std::size_t bd = p_.bd();
    if (parent.empty()) {
      for (auto& v : out) v = T(0.0);
      return;
    }
    const std::size_t g = begin_ + j;
    const std::uint32_t c = ev_[g - 1].mark;
    for (std::size_t r = 0; r < bd; ++r) {
      T a;
      if (prop_) {
        a = prop_->alpha[c * bd + r] + exp(prop_->log_sd[c * bd + r]) * eps[r];
      } else {
        a = p_.alpha[c * bd + r] + sqrt(p_.sigma2[c * bd + r]) * eps[r];
      }
      out[bd + r] = a;
    }
    advance(g, parent, out);
  }

  T log_proposal(std::size_t j, std::span<const T> parent, std::span<const T> x) const {
    if (parent.empty()) return T(0.0);
    if (!prop_) return log_transition(j, parent, x);
    const std::size_t bd = p_.bd();
    const std::uint32_t c = ev_[begin_ + j - 1].mark;
    T lp(0.0);
    for (std::size_t r = 0; r < bd; ++r) {
      lp = lp + normal_logpdf_logsd(x[bd + r], prop_->alpha[c * bd + r], prop_->log_sd[c * bd + r]);
    }
    return lp;
  }

  /// Density of the jump A only; Z is a deterministic function of (parent, A)
  /// shared with the proposal, so its Jacobian cancels in every weight.
  T log_transition(std::size_t j, std::span<const T> parent, std::span<const T> x) const {
    if (parent.empty()) return T(0.0);
    const std::size_t bd = p_.bd();
    const std::uint32_t c = ev_[begin_ + j - 1].mark;
    T lp(0.0);
    for (std::size_t r = 0; r < bd; ++r) {
      lp = lp + normal_logpdf(x[bd + r], p_.alpha[c * bd + r], p_.sigma2[c * bd + r]);
    }
    return lp;
  }

  T log_observation(std::size_t j, std::span<const T> x) const {
    const std::size_t g = begin_ + j;
    const double dt = ev_[g].t - prev_time(g);
    return log_observation_density(p_, x.subspan(0, p_.bd()), dt, ev_[g].mark, reference_rule());
  }

  /// Z_{g−1} = e^{−β Δ} Z_{g−2} + β A_{g−1}, written into out[0, BD).
  void advance(std::size_t g, std::span<const T> parent, std::span<T> out) const {
    using std::exp;
    const double dt = ev_[g - 1].t - prev_time(g - 1);
    for (std::size_t b = 0; b < p_.B; ++b) {
      const T decay = exp(-p_.beta[b] * dt);
      for (std::size_t i = 0; i < p_.D; ++i) {
        const std::size_t r = b * p_.D + i;
        out[r] = decay * parent[r] + p_.beta[b] * out[p_.bd() + r];
      }
    }
  }

  double prev_time(std::size_t g) const { return g == 0 ? origin_ : ev_[g - 1].t; }

 private:
  const Params<T>& p_;
  const Proposal<T>* prop_;
  const EventStream& ev_;
  std::size_t begin_, end_;
  double origin_;
};

/// Upper bound on Σ_i λ^i over [t_prev + s, ∞): positive excitation parts at
/// elapsed time s, negative parts dropped (they only decay toward zero).
double intensity_bound(const Params<double>& p, std::span<const double> z, double s);

/// Next event after elapsed time `s_from` since the last event (Ogata
/// thinning). Returns the elapsed time and mark; no event before `s_max`
/// gives nullopt.
struct Draw {
  double elapsed = 0.0;
  std::uint32_t mark = 0;
};
std::optional<Draw> thinning_next(const Params<double>& p, std::span<const double> z, double s_from,
                                  double s_max, RngStream& rng);

/// Simulates from t = 0 until `max_events` events or time `horizon`.
EventStream simulate(const Params<double>& p, std::size_t max_events, double horizon, RngStream& rng);

/// Exact compensator of the linear model (h = identity, deterministic jumps
/// A_n = α_{c_n}) over elapsed [s1, s2] after the last event, given z.
double linear_compensator(const Params<double>& p, std::span<const double> z, double s1, double s2);

/// Linear Hawkes maximum-likelihood fit (μ via log, α free) by Adam on the
/// tape; β fixed. Returns μ and α with deterministic jumps.
struct LinearFit {
  std::vector<double> mu;
  std::vector<double> alpha;
  double loglik = 0.0;
};
LinearFit fit_linear(const EventStream& events, std::size_t D, std::span<const double> beta,
                     std::size_t iterations, double step_size);
double linear_loglik(const EventStream& events, std::size_t D, std::span<const double> beta,
                     std::span<const double> mu, std::span<const double> alpha);

/// θ layout: μ (D, log-normal), α (D·BD, normal), σ² (D·BD, log-normal),
/// ν (sigmoid-normal). β is fixed.
std::size_t theta_size(std::size_t D, std::size_t B);
template <class T>
Params<T> params_from_theta(std::span<const T> theta, std::size_t D, std::size_t B,
                            std::span<const double> beta) {
  Params<T> p;
  p.D = D;
  p.B = B;
  const std::size_t bd = B * D;
  std::size_t o = 0;
  for (std::size_t i = 0; i < D; ++i) p.mu.push_back(theta[o++]);
  for (std::size_t i = 0; i < D * bd; ++i) p.alpha.push_back(theta[o++]);
  for (std::size_t i = 0; i < D * bd; ++i) p.sigma2.push_back(theta[o++]);
  p.nu = theta[o++];
  for (double b : beta) p.beta.push_back(T(b));
  return p;
}
std::vector<double> theta_from_params(const Params<double>& p);

template <class T>
Proposal<T> proposal_from_phi(std::span<const T> phi, std::size_t D, std::size_t B) {
  const std::size_t n = D * B * D;
  Proposal<T> q;
  q.alpha.assign(phi.begin(), phi.begin() + static_cast<std::ptrdiff_t>(n));
  q.log_sd.assign(phi.begin() + static_cast<std::ptrdiff_t>(n), phi.begin() + static_cast<std::ptrdiff_t>(2 * n));
  return q;
}

/// Trains on consecutive event batches, carrying particles from one batch
/// to the next. The batch log Ẑ is scaled by N / batch length.
class Recipe {
 public:
  Recipe(EventStream events, std::size_t D, std::vector<double> beta, std::size_t batch = 100,
         std::optional<LinearFit> init = std::nullopt);

  std::size_t num_series() const { return bounds_.size(); }
  bool sequential_series() const { return true; }
  MeanFieldFamily initial_family() const;
  std::vector<Prior> priors() const;
  std::vector<double> initial_proposal() const;
  double evidence_scale(std::size_t s) const;
  std::size_t dim() const { return D_; }
  std::size_t bases() const { return beta_.size(); }
  const std::vector<double>& beta() const { return beta_; }

  template <class T>
  ParticleSystem<T> run(std::span<const T> theta, std::span<const T> phi, std::size_t s, const SmcOptions& opts,
                        SmcStreams& streams) const {
    const Params<T> p = params_from_theta(theta, D_, beta_.size(), beta_);
    const Proposal<T> q = proposal_from_phi(phi, D_, beta_.size());
    Model<T> model(p, &q, events_, bounds_[s].first, bounds_[s].second);
    std::optional<InitialParticles<T>> init;
    if (s > 0 && carried_[s - 1] && carried_[s - 1]->log_norm_weights.size() == opts.particles) {
      const auto& c = *carried_[s - 1];
      init.emplace();
      init->dim = c.dim;
      init->log_norm_weights = c.log_norm_weights;
      for (double v : c.states) init->states.push_back(T(v));
    }
    ParticleFilter<Model<T>> pf(model, opts, streams, init ? &*init : nullptr);
    while (!pf.done()) pf.step();
    InitialParticles<T> out = pf.carry();
    InitialParticles<double> keep;
    keep.dim = out.dim;
    keep.log_norm_weights = out.log_norm_weights;
    for (const T& v : out.states) keep.states.push_back(value(v));
    carried_[s] = std::move(keep);
    return pf.finish();
  }

  /// Carried particle state, flattened for checkpoints.
  std::vector<double> save_state() const;
  void load_state(std::span<const double> state);

 private:
  EventStream events_;
  std::size_t D_;
  std::vector<double> beta_;
  std::vector<std::pair<std::size_t, std::size_t>> bounds_;
  std::optional<LinearFit> init_;
  mutable std::vector<std::optional<InitialParticles<double>>> carried_;
};

/// Streaming next-mark predictor: S particle filters advanced one event at
/// a time; predict() is called before the next event is consumed.
struct PredictorOptions {
  std::size_t samples = 1;     // S
  std::size_t particles = 20;  // K
  std::size_t draws = 10;      // J
};

struct MarkPrediction {
  std::uint32_t mark = 0;
  std::vector<double> weighted_counts;
};

class MarkPredictor {
 public:
  /// θ_s drawn from `family` if given, otherwise `fixed` is shared by all S filters.
  MarkPredictor(const EventStream& events, std::size_t D, std::vector<double> beta, const MeanFieldFamily* family,
                std::vector<double> fixed, std::vector<double> phi, const PredictorOptions& opts, RngStream rng);
  ~MarkPredictor();
  MarkPredictor(const MarkPredictor&) = delete;
  MarkPredictor& operator=(const MarkPredictor&) = delete;

  /// Consumes the next event of the stream.
  void advance();
  std::size_t consumed() const { return consumed_; }
  /// Mark of event `consumed()` predicted from events before it.
  MarkPrediction predict();

 private:
  struct Filter;
  const EventStream& events_;
  std::size_t D_;
  std::vector<double> beta_;
  PredictorOptions opts_;
  RngStream rng_;
  std::vector<std::unique_ptr<Filter>> filters_;
  std::size_t consumed_ = 0;
};

}  // namespace smcvi::hawkes
