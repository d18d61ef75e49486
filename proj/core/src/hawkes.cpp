#include "smcvi/hawkes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "smcvi/autodiff.hpp"
#include "smcvi/optim.hpp"

namespace smcvi::hawkes {

void validate_stream(const EventStream& events, std::size_t dim) {
  for (std::size_t n = 0; n < events.size(); ++n) {
    if (events[n].mark >= dim) {
      throw std::invalid_argument("event " + std::to_string(n) + ": mark out of range");
    }
    if (n > 0 && !(events[n].t > events[n - 1].t)) {
      throw std::invalid_argument("event " + std::to_string(n) + ": timestamps must strictly increase");
    }
  }
}

const QuadratureRule& reference_rule() {
  static const QuadratureRule rule = gauss_legendre(kQuadraturePoints);
  return rule;
}

std::vector<double> intensity(const Params<double>& p, std::span<const double> z, double t_prev, double t) {
  if (t < t_prev) throw std::invalid_argument("intensity requested before the last event");
  std::vector<double> lam(p.D);
  for (std::size_t i = 0; i < p.D; ++i) lam[i] = intensity_at(p, z, i, t - t_prev);
  return lam;
}

double intensity_bound(const Params<double>& p, std::span<const double> z, double s) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.D; ++i) {
    double arg = p.mu[i];
    for (std::size_t b = 0; b < p.B; ++b) arg += std::max(0.0, std::exp(-p.beta[b] * s) * z[b * p.D + i]);
    total += link(arg, p.nu);
  }
  return total;
}

std::optional<Draw> thinning_next(const Params<double>& p, std::span<const double> z, double s_from, double s_max,
                                  RngStream& rng) {
  double s = s_from;
  std::vector<double> lam(p.D);
  while (true) {
    const double bound = intensity_bound(p, z, s);
    if (!(bound > 0.0)) return std::nullopt;
    s += rng.exponential() / bound;
    if (s > s_max) return std::nullopt;
    double total = 0.0;
    for (std::size_t i = 0; i < p.D; ++i) {
      lam[i] = intensity_at(p, z, i, s);
      total += lam[i];
    }
    // The bound is non-increasing in s, so bound(s_old) ≥ Σλ(s). A violation
    // would mean a broken bound; restart from s with a fresh one instead.
    if (total > bound * (1.0 + 1e-12)) continue;
    if (rng.uniform() * bound <= total) {
      double u = rng.uniform() * total;
      std::uint32_t c = 0;
      for (; c + 1 < p.D; ++c) {
        if (u < lam[c]) break;
        u -= lam[c];
      }
      return Draw{s, c};
    }
  }
}

EventStream simulate(const Params<double>& p, std::size_t max_events, double horizon, RngStream& rng) {
  const std::size_t bd = p.bd();
  std::vector<double> z(bd, 0.0);
  EventStream out;
  double t = 0.0;
  while (out.size() < max_events) {
    auto d = thinning_next(p, z, 0.0, horizon - t, rng);
    if (!d) break;
    t += d->elapsed;
    out.push_back({t, d->mark});
    for (std::size_t b = 0; b < p.B; ++b) {
      const double decay = std::exp(-p.beta[b] * d->elapsed);
      for (std::size_t i = 0; i < p.D; ++i) {
        const std::size_t r = b * p.D + i;
        const double a = p.alpha[d->mark * bd + r] + std::sqrt(p.sigma2[d->mark * bd + r]) * rng.normal();
        z[r] = decay * z[r] + p.beta[b] * a;
      }
    }
  }
  return out;
}

double linear_compensator(const Params<double>& p, std::span<const double> z, double s1, double s2) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.D; ++i) {
    total += p.mu[i] * (s2 - s1);
    for (std::size_t b = 0; b < p.B; ++b) {
      total += z[b * p.D + i] / p.beta[b] * (std::exp(-p.beta[b] * s1) - std::exp(-p.beta[b] * s2));
    }
  }
  return total;
}

namespace {

template <class T>
T linear_loglik_t(const EventStream& events, std::size_t D, std::span<const double> beta, std::span<const T> mu,
                  std::span<const T> alpha) {
  using std::log;
  const std::size_t B = beta.size(), bd = B * D;
  const double horizon = events.back().t;
  std::vector<T> r(bd, T(0.0));
  T ll(0.0);
  double t_prev = 0.0;
  for (std::size_t n = 0; n < events.size(); ++n) {
    const double dt = events[n].t - t_prev;
    for (std::size_t b = 0; b < B; ++b) {
      const double decay = std::exp(-beta[b] * dt);
      for (std::size_t i = 0; i < D; ++i) r[b * D + i] = decay * r[b * D + i];
    }
    const std::uint32_t c = events[n].mark;
    T lam = mu[c];
    for (std::size_t b = 0; b < B; ++b) lam = lam + r[b * D + c];
    if (value(lam) > 1e-12) {
      ll = ll + log(lam);
    } else {
      ll = ll + std::log(1e-12);
    }
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t i = 0; i < D; ++i) r[b * D + i] = r[b * D + i] + beta[b] * alpha[c * bd + b * D + i];
    }
    t_prev = events[n].t;
  }
  // Compensator: Σ_i μ_i T + Σ_n Σ_{b,i} α_{c_n}^{b,i} (1 − e^{−β_b (T − t_n)}).
  std::vector<double> coef(D * bd, 0.0);
  for (const auto& e : events) {
    for (std::size_t b = 0; b < B; ++b) {
      const double w = 1.0 - std::exp(-beta[b] * (horizon - e.t));
      for (std::size_t i = 0; i < D; ++i) coef[e.mark * bd + b * D + i] += w;
    }
  }
  for (std::size_t i = 0; i < D; ++i) ll = ll - mu[i] * horizon;
  ll = ll - dot(std::span<const double>(coef), alpha);
  return ll;
}

}  // namespace

double linear_loglik(const EventStream& events, std::size_t D, std::span<const double> beta,
                     std::span<const double> mu, std::span<const double> alpha) {
  return linear_loglik_t<double>(events, D, beta, mu, alpha);
}

LinearFit fit_linear(const EventStream& events, std::size_t D, std::span<const double> beta, std::size_t iterations,
                     double step_size) {
  if (events.empty()) throw std::invalid_argument("linear fit needs events");
  const std::size_t bd = beta.size() * D;
  // Start from the empirical per-mark rate and zero excitation.
  std::vector<double> params(D + D * bd, 0.0);
  std::vector<double> counts(D, 0.0);
  for (const auto& e : events) counts[e.mark] += 1.0;
  for (std::size_t i = 0; i < D; ++i) params[i] = std::log(std::max(counts[i], 1.0) / events.back().t);
  AdamState st;
  AdamConfig cfg;
  cfg.step_size = step_size;
  const double scale = 1.0 / static_cast<double>(events.size());
  for (std::size_t it = 0; it < iterations; ++it) {
    ad::Tape tape;
    std::vector<ad::Var> mu, alpha;
    for (std::size_t i = 0; i < D; ++i) mu.push_back(ad::exp(tape.parameter(params[i])));
    for (std::size_t k = 0; k < D * bd; ++k) alpha.push_back(tape.parameter(params[D + k]));
    const ad::Var ll = linear_loglik_t<ad::Var>(events, D, beta, mu, alpha);
    auto g = tape.gradient(ll);
    for (auto& x : g) x *= -scale;
    adam_update(params, g, st, cfg);
  }
  LinearFit out;
  for (std::size_t i = 0; i < D; ++i) out.mu.push_back(std::exp(params[i]));
  out.alpha.assign(params.begin() + static_cast<std::ptrdiff_t>(D), params.end());
  out.loglik = linear_loglik(events, D, beta, out.mu, out.alpha);
  return out;
}

std::size_t theta_size(std::size_t D, std::size_t B) { return D + 2 * D * B * D + 1; }

std::vector<double> theta_from_params(const Params<double>& p) {
  std::vector<double> t(p.mu);
  t.insert(t.end(), p.alpha.begin(), p.alpha.end());
  t.insert(t.end(), p.sigma2.begin(), p.sigma2.end());
  t.push_back(p.nu);
  return t;
}

Recipe::Recipe(EventStream events, std::size_t D, std::vector<double> beta, std::size_t batch,
               std::optional<LinearFit> init)
    : events_(std::move(events)), D_(D), beta_(std::move(beta)), init_(std::move(init)) {
  if (events_.empty()) throw std::invalid_argument("no training events");
  if (batch == 0) throw std::invalid_argument("batch length must be positive");
  validate_stream(events_, D_);
  for (std::size_t b = 0; b < events_.size(); b += batch) {
    bounds_.emplace_back(b, std::min(events_.size(), b + batch));
  }
  carried_.resize(bounds_.size());
}

MeanFieldFamily Recipe::initial_family() const {
  const std::size_t bd = beta_.size() * D_;
  const double v0 = std::log(0.1);
  std::vector<Factor> f;
  std::vector<double> counts(D_, 0.0);
  for (const auto& e : events_) counts[e.mark] += 1.0;
  for (std::size_t i = 0; i < D_; ++i) {
    const double mu0 = init_ ? init_->mu[i] : std::max(counts[i], 1.0) / events_.back().t;
    f.push_back({"mu[" + std::to_string(i) + "]", FactorKind::LogNormal, std::log(std::max(mu0, 1e-6)), v0});
  }
  for (std::size_t k = 0; k < D_ * bd; ++k) {
    f.push_back({"alpha[" + std::to_string(k / bd) + "][" + std::to_string(k % bd) + "]", FactorKind::Normal,
                 init_ ? init_->alpha[k] : 0.0, v0});
  }
  for (std::size_t k = 0; k < D_ * bd; ++k) {
    f.push_back({"sigma2[" + std::to_string(k / bd) + "][" + std::to_string(k % bd) + "]", FactorKind::LogNormal,
                 std::log(0.01), v0});
  }
  f.push_back({"nu", FactorKind::SigmoidNormal, std::log(0.01 / 0.99), v0});
  return MeanFieldFamily(std::move(f));
}

std::vector<Prior> Recipe::priors() const {
  const std::size_t n = D_ * beta_.size() * D_;
  std::vector<Prior> p;
  p.insert(p.end(), D_, Prior::gamma(0.01, 0.01));
  p.insert(p.end(), n, Prior::normal(0.0, 10.0));
  p.insert(p.end(), n, Prior::gamma(0.01, 0.01));
  p.push_back(Prior::uniform(0.0, 1.0));
  return p;
}

std::vector<double> Recipe::initial_proposal() const {
  const std::size_t n = D_ * beta_.size() * D_;
  std::vector<double> phi;
  for (std::size_t k = 0; k < n; ++k) phi.push_back(init_ ? init_->alpha[k] : 0.0);
  phi.insert(phi.end(), n, 0.5 * std::log(0.01));
  return phi;
}

double Recipe::evidence_scale(std::size_t s) const {
  const auto [b, e] = bounds_.at(s);
  return static_cast<double>(events_.size()) / static_cast<double>(e - b);
}

std::vector<double> Recipe::save_state() const {
  std::vector<double> out;
  out.push_back(static_cast<double>(carried_.size()));
  for (const auto& c : carried_) {
    if (!c) {
      out.push_back(0.0);
      continue;
    }
    out.push_back(static_cast<double>(c->log_norm_weights.size()));
    out.push_back(static_cast<double>(c->dim));
    out.insert(out.end(), c->log_norm_weights.begin(), c->log_norm_weights.end());
    out.insert(out.end(), c->states.begin(), c->states.end());
  }
  return out;
}

void Recipe::load_state(std::span<const double> state) {
  if (state.empty()) return;
  std::size_t o = 0;
  const auto count = static_cast<std::size_t>(state[o++]);
  if (count != carried_.size()) throw std::invalid_argument("carried state does not match the batch layout");
  for (auto& c : carried_) {
    const auto k = static_cast<std::size_t>(state[o++]);
    if (k == 0) {
      c.reset();
      continue;
    }
    InitialParticles<double> ip;
    ip.dim = static_cast<std::size_t>(state[o++]);
    ip.log_norm_weights.assign(state.begin() + static_cast<std::ptrdiff_t>(o),
                               state.begin() + static_cast<std::ptrdiff_t>(o + k));
    o += k;
    ip.states.assign(state.begin() + static_cast<std::ptrdiff_t>(o),
                     state.begin() + static_cast<std::ptrdiff_t>(o + k * ip.dim));
    o += k * ip.dim;
    c = std::move(ip);
  }
}

struct MarkPredictor::Filter {
  Params<double> params;
  std::optional<Proposal<double>> proposal;
  SmcStreams streams;
  RngStream draws;
  std::optional<Model<double>> model;
  std::optional<ParticleFilter<Model<double>>> pf;

  Filter(Params<double> p, std::optional<Proposal<double>> q, const RngStream& rng)
      : params(std::move(p)), proposal(std::move(q)), streams(rng.child(0)), draws(rng.child(1)) {}
};

MarkPredictor::MarkPredictor(const EventStream& events, std::size_t D, std::vector<double> beta,
                             const MeanFieldFamily* family, std::vector<double> fixed, std::vector<double> phi,
                             const PredictorOptions& opts, RngStream rng)
    : events_(events), D_(D), beta_(std::move(beta)), opts_(opts), rng_(rng) {
  if (events_.empty()) throw std::invalid_argument("next-mark prediction needs a non-empty history");
  validate_stream(events_, D_);
  SmcOptions so;
  so.particles = opts_.particles;
  so.policy = ResamplingPolicy::always();
  so.keep_history = false;
  for (std::size_t s = 0; s < opts_.samples; ++s) {
    RngStream srng = rng_.child(s);
    std::vector<double> theta = fixed;
    if (family) {
      RngStream trng = srng.child(2);
      theta = family->sample(trng).theta;
    }
    auto p = params_from_theta<double>(theta, D_, beta_.size(), beta_);
    std::optional<Proposal<double>> q;
    if (!phi.empty()) q = proposal_from_phi<double>(phi, D_, beta_.size());
    auto f = std::make_unique<Filter>(std::move(p), std::move(q), srng);
    f->model.emplace(f->params, f->proposal ? &*f->proposal : nullptr, events_, 0, events_.size());
    f->pf.emplace(*f->model, so, f->streams);
    filters_.push_back(std::move(f));
  }
}

MarkPredictor::~MarkPredictor() = default;

void MarkPredictor::advance() {
  if (consumed_ >= events_.size()) throw std::logic_error("event stream exhausted");
  for (auto& f : filters_) f->pf->step();
  ++consumed_;
}

MarkPrediction MarkPredictor::predict() {
  MarkPrediction out;
  out.weighted_counts.assign(D_, 0.0);
  const std::size_t bd = beta_.size() * D_;
  std::vector<double> z(bd), eps(bd);
  for (auto& f : filters_) {
    const Params<double>& p = f->params;
    for (std::size_t k = 0; k < opts_.particles; ++k) {
      double w = 1.0 / static_cast<double>(opts_.particles);
      if (consumed_ == 0) {
        std::fill(z.begin(), z.end(), 0.0);
      } else {
        // x_m = (Z_{m−1}, A_{m−1}); draw A_m from the prior and advance to Z_m.
        const std::size_t m = consumed_ - 1;
        auto x = f->pf->current_state(k);
        w = std::exp(f->pf->current_log_norm_weight(k));
        const std::uint32_t c = events_[m].mark;
        const double dt = events_[m].t - (m == 0 ? 0.0 : events_[m - 1].t);
        for (std::size_t b = 0; b < p.B; ++b) {
          const double decay = std::exp(-p.beta[b] * dt);
          for (std::size_t i = 0; i < p.D; ++i) {
            const std::size_t r = b * p.D + i;
            const double a = p.alpha[c * bd + r] + std::sqrt(p.sigma2[c * bd + r]) * f->draws.normal();
            z[r] = decay * x[r] + p.beta[b] * a;
          }
        }
      }
      for (std::size_t j = 0; j < opts_.draws; ++j) {
        auto d = thinning_next(p, z, 0.0, 1e6, f->draws);
        if (d) out.weighted_counts[d->mark] += w;
      }
    }
  }
  out.mark = 0;
  for (std::uint32_t c = 1; c < D_; ++c) {
    if (out.weighted_counts[c] > out.weighted_counts[out.mark]) out.mark = c;
  }
  return out;
}

}  // namespace smcvi::hawkes
