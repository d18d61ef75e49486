#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "smcvi/hawkes.hpp"

using namespace smcvi;
using namespace smcvi::hawkes;

namespace {

Params<double> scalar_hawkes(double mu, double alpha, double beta, double nu, double sigma2 = 0.0) {
  Params<double> p;
  p.D = 1;
  p.B = 1;
  p.mu = {mu};
  p.alpha = {alpha};
  p.sigma2 = {sigma2};
  p.beta = {beta};
  p.nu = nu;
  return p;
}

Params<double> random_params(std::size_t D, std::size_t B, RngStream& rng) {
  Params<double> p;
  p.D = D;
  p.B = B;
  const std::size_t bd = B * D;
  for (std::size_t i = 0; i < D; ++i) p.mu.push_back(0.2 + rng.uniform());
  for (std::size_t k = 0; k < D * bd; ++k) p.alpha.push_back(0.3 * rng.normal());
  for (std::size_t k = 0; k < D * bd; ++k) p.sigma2.push_back(0.01 + 0.05 * rng.uniform());
  double acc = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    acc += 0.5 + 2.0 * rng.uniform();
    p.beta.push_back(acc);
  }
  p.nu = 0.05 + 0.3 * rng.uniform();
  return p;
}

}  // namespace

TEST(HawkesIntensity, BackgroundOnlyWhenZIsZero) {
  Params<double> p;
  p.D = 2;
  p.B = 2;
  p.mu = {0.3, -0.2};
  p.alpha.assign(8, 0.0);
  p.sigma2.assign(8, 0.0);
  p.beta = {1.0, 5.0};
  p.nu = 0.2;
  const std::vector<double> z(4, 0.0);
  for (double t : {0.0, 0.5, 10.0}) {
    const auto lam = intensity(p, z, 0.0, t);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(lam[i], 0.2 * std::log1p(std::exp(p.mu[i] / 0.2)), 1e-15);
  }
  EXPECT_THROW(intensity(p, z, 1.0, 0.5), std::invalid_argument);
}

TEST(HawkesIntensity, SmallNuFloorsInhibitionAtZero) {
  const std::vector<double> z{-3.0};
  const auto p = scalar_hawkes(1.0, 0.0, 1.0, 1e-4);
  const double lam = intensity_at(p, std::span<const double>(z), 0, 0.1);
  EXPECT_GE(lam, 0.0);
  EXPECT_LT(lam, 1e-100);
}

TEST(HawkesIntensity, SingleEventHandFormula) {
  const double mu = 0.4, beta = 2.5, a = 0.7, nu = 0.3, dt = 0.37;
  const auto p = scalar_hawkes(mu, a, beta, nu);
  const std::vector<double> z{beta * a};
  const double y = mu + beta * a * std::exp(-beta * dt);
  const double hand = nu * std::log1p(std::exp(y / nu));
  EXPECT_NEAR(intensity(p, z, 1.0, 1.0 + dt)[0], hand, 1e-12);
}

TEST(HawkesObservation, HomogeneousPoisson) {
  const double mu = 1.7, dt = 0.8;
  const auto p = scalar_hawkes(mu, 0.0, 1.0, 1e-6);
  const std::vector<double> z{0.0};
  const double lg = log_observation_density(p, std::span<const double>(z), dt, 0, reference_rule());
  // The rule integrates from kMinElapsed, so the closed form does too.
  EXPECT_NEAR(lg, std::log(mu) - mu * (dt - kMinElapsed), 1e-6);
  EXPECT_NEAR(lg, std::log(mu) - mu * dt, 1e-5);
}

TEST(HawkesObservation, LinearLimitMatchesClosedFormCompensator) {
  RngStream rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    Params<double> p;
    p.D = 2;
    p.B = 2;
    p.mu = {0.1 + rng.uniform(), 0.1 + rng.uniform()};
    p.alpha.assign(8, 0.0);
    p.sigma2.assign(8, 0.0);
    p.beta = {0.3 + rng.uniform(), 5.0 + 20.0 * rng.uniform()};
    p.nu = 1e-9;
    std::vector<double> z(4);
    for (auto& v : z) v = 3.0 * rng.uniform();
    const double dt = std::exp(-4.0 + 6.0 * rng.uniform());
    const double quad = compensator(p, std::span<const double>(z), dt, reference_rule());
    EXPECT_NEAR(quad, linear_compensator(p, z, kMinElapsed, dt), 1e-6) << rep;
  }
}

TEST(HawkesObservation, ZeroIntensityIsFlagged) {
  const auto p = scalar_hawkes(-1.0, 0.0, 1.0, 1e-3);
  const std::vector<double> z{0.0};
  bool flag = false;
  const double lg = log_observation_density(p, std::span<const double>(z), 0.5, 0, reference_rule(), &flag);
  EXPECT_TRUE(flag);
  EXPECT_EQ(lg, kNegInf);
  EXPECT_THROW(log_observation_density(p, std::span<const double>(z), -0.1, 0, reference_rule()),
               std::invalid_argument);
}

TEST(Quadrature, ExponentialIntegral) {
  const auto r = log_transformed_rule(1e-12, 1.0, 50);
  double acc = 0.0;
  for (std::size_t i = 0; i < r.nodes.size(); ++i) acc += r.weights[i] * std::exp(-5.0 * r.nodes[i]);
  const double exact = (std::exp(-5.0 * 1e-12) - std::exp(-5.0)) / 5.0;
  EXPECT_NEAR(acc, exact, 1e-8 * exact);
  EXPECT_NEAR(acc, (1.0 - std::exp(-5.0)) / 5.0, 1e-8);
}

TEST(Quadrature, SingleNodeAtGeometricMean) {
  const auto r = log_transformed_rule(0.01, 4.0, 1);
  ASSERT_EQ(r.nodes.size(), 1u);
  EXPECT_NEAR(r.nodes[0], std::sqrt(0.04), 1e-15);
}

TEST(Quadrature, WeightsSumToSpan) {
  for (auto [a, b] : {std::pair{1e-6, 1.0}, std::pair{0.5, 3000.0}, std::pair{2.0, 2.5}}) {
    const auto r = log_transformed_rule(a, b, 50);
    double s = 0.0;
    for (double w : r.weights) s += w;
    EXPECT_NEAR(s, b - a, 1e-10 * std::max(1.0, b - a));
  }
  EXPECT_EQ(reference_rule().nodes.size(), 50u);
}

TEST(Quadrature, RejectsNonPositiveOrEmptyRange) {
  EXPECT_THROW(log_transformed_rule(0.0, 1.0, 10), std::domain_error);
  EXPECT_THROW(log_transformed_rule(-1.0, 1.0, 10), std::domain_error);
  EXPECT_THROW(log_transformed_rule(2.0, 1.0, 10), std::domain_error);
}

TEST(Quadrature, LegendreIntegratesPolynomialsExactly) {
  const auto r = gauss_legendre(5);
  // Degree 2n − 1 = 9.
  double acc = 0.0;
  for (std::size_t i = 0; i < 5; ++i) acc += r.weights[i] * std::pow(r.nodes[i], 8);
  EXPECT_NEAR(acc, 2.0 / 9.0, 1e-14);
}

TEST(HawkesBetas, LogIncrementsFixedGrid) {
  const std::vector<double> logs{-1.0, 1.0, 3.0, 5.0, 7.0};
  const auto beta = betas_from_log_increments<double>(logs);
  ASSERT_EQ(beta.size(), 5u);
  EXPECT_NEAR(beta[0], 0.3679, 1e-4);
  EXPECT_NEAR(beta[4], 1268.0, 0.5);
  for (std::size_t b = 1; b < 5; ++b) EXPECT_GT(beta[b], beta[b - 1]);
}

TEST(HawkesSimulate, PoissonCount) {
  const auto p = scalar_hawkes(2.0, 0.0, 1.0, 1e-6);
  RngStream rng(21);
  const auto ev = simulate(p, 1000000, 1e4, rng);
  const double n = static_cast<double>(ev.size());
  EXPECT_NEAR(n, 20000.0, 3.0 * std::sqrt(20000.0));
  EXPECT_NO_THROW(validate_stream(ev, 1));
}

TEST(HawkesSimulate, InhibitionKeepsRateBelowBackground) {
  const auto p = scalar_hawkes(1.0, -0.5, 2.0, 1e-3, 0.01);
  RngStream rng(22);
  const double horizon = 5000.0;
  const auto ev = simulate(p, 1000000, horizon, rng);
  const double bg = link(1.0, 1e-3);
  EXPECT_LE(static_cast<double>(ev.size()) / horizon, bg);
}

TEST(HawkesSimulate, BranchingRatioHalfMeanRate) {
  const double mu = 1.0, horizon = 1e4;
  const auto p = scalar_hawkes(mu, 0.5, 1.5, 1e-6);
  RngStream rng(23);
  const auto ev = simulate(p, 10000000, horizon, rng);
  // Count variance of a linear Hawkes process: μT / (1 − n)³.
  const double mean = mu * horizon / 0.5;
  const double sd = std::sqrt(mu * horizon / 0.125);
  EXPECT_NEAR(static_cast<double>(ev.size()), mean, 3.0 * sd);
}

TEST(HawkesSimulate, TimeRescalingIsExponential) {
  Params<double> p;
  p.D = 2;
  p.B = 2;
  p.mu = {0.5, 0.2};
  p.alpha = {0.4, 0.1, 0.2, -0.1, 0.0, 0.3, 0.1, 0.2};
  p.sigma2.assign(8, 0.0);
  p.beta = {1.0, 8.0};
  p.nu = 0.2;
  RngStream rng(24);
  const auto ev = simulate(p, 5000, 1e9, rng);
  ASSERT_EQ(ev.size(), 5000u);
  // With σ² = 0 the jumps are the means, so the excitation path is known.
  std::vector<double> z(4, 0.0), taus;
  double t_prev = 0.0;
  for (const auto& e : ev) {
    const double dt = e.t - t_prev;
    // Add the sliver [0, kMinElapsed] the rule leaves out.
    double tau = compensator(p, std::span<const double>(z), dt, reference_rule());
    for (std::size_t i = 0; i < 2; ++i) tau += kMinElapsed * intensity_at(p, std::span<const double>(z), i, 0.0);
    taus.push_back(tau);
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t i = 0; i < 2; ++i) {
        const std::size_t r = b * 2 + i;
        z[r] = std::exp(-p.beta[b] * dt) * z[r] + p.beta[b] * p.alpha[e.mark * 4 + r];
      }
    }
    t_prev = e.t;
  }
  const double pv = oracle::ks_pvalue(taus, [](double x) { return 1.0 - std::exp(-x); });
  EXPECT_GT(pv, 0.01);
}

TEST(HawkesThinning, NoEventBeforeHorizon) {
  const auto p = scalar_hawkes(1e-3, 0.0, 1.0, 1e-6);
  RngStream rng(2);
  const std::vector<double> z{0.0};
  int none = 0;
  for (int i = 0; i < 100; ++i) none += thinning_next(p, z, 0.0, 1e-3, rng) ? 0 : 1;
  EXPECT_GE(none, 95);
}

TEST(HawkesModel, DecayIdentityHoldsForEveryParticle) {
  RngStream rng(5);
  const auto p = random_params(2, 2, rng);
  const auto ev = simulate(p, 40, 1e9, rng);
  Model<double> m(p, nullptr, ev, 0, ev.size());
  SmcOptions o;
  o.particles = 8;
  SmcStreams s(6);
  const auto sys = run_smc(m, o, s);
  const std::size_t bd = p.bd();
  for (std::size_t n = 1; n < sys.num_steps; ++n) {
    const double dt = ev[n - 1].t - (n == 1 ? 0.0 : ev[n - 2].t);
    for (std::size_t k = 0; k < 8; ++k) {
      const auto x = sys.state(n, k);
      const auto par = sys.state(n - 1, sys.ancestry.ancestors[n][k]);
      for (std::size_t b = 0; b < 2; ++b) {
        for (std::size_t i = 0; i < 2; ++i) {
          const std::size_t r = b * 2 + i;
          EXPECT_EQ(x[r], std::exp(-p.beta[b] * dt) * par[r] + p.beta[b] * x[bd + r]);
        }
      }
    }
  }
}

TEST(HawkesModel, PriorProposalWeightIsObservationOnly) {
  RngStream rng(8);
  const auto p = random_params(2, 1, rng);
  const auto ev = simulate(p, 10, 1e9, rng);
  Model<double> m(p, nullptr, ev, 0, ev.size());
  const std::vector<double> parent{0.1, -0.2, 0.0, 0.0}, x{0.3, 0.2, 0.5, -0.1};
  EXPECT_EQ(m.log_transition(3, parent, x) - m.log_proposal(3, parent, x), 0.0);
  EXPECT_THROW(Model<double>(p, nullptr, ev, 5, 5), std::invalid_argument);
}

TEST(HawkesObservation, GradientMatchesFiniteDifferences) {
  RngStream rng(9);
  for (int rep = 0; rep < 5; ++rep) {
    const std::size_t D = 2, B = 2, bd = B * D;
    const auto p0 = random_params(D, B, rng);
    std::vector<double> z0(bd);
    for (auto& v : z0) v = rng.normal();
    const double dt = 0.05 + rng.uniform();
    const std::uint32_t mark = rep % 2;
    // x = (μ, log β increments, ν, z).
    std::vector<double> x0(p0.mu);
    x0.push_back(std::log(p0.beta[0]));
    x0.push_back(std::log(p0.beta[1] - p0.beta[0]));
    x0.push_back(p0.nu);
    x0.insert(x0.end(), z0.begin(), z0.end());
    auto eval = [&]<class T>(std::span<const T> x) {
      Params<T> p;
      p.D = D;
      p.B = B;
      p.mu = {x[0], x[1]};
      p.beta = betas_from_log_increments<T>(x.subspan(2, 2));
      p.nu = x[4];
      return log_observation_density(p, x.subspan(5, bd), dt, mark, reference_rule());
    };
    ad::Tape tape;
    std::vector<Var> v;
    for (double x : x0) v.push_back(tape.parameter(x));
    const auto g = tape.gradient(eval(std::span<const Var>(v)));
    for (std::size_t i = 0; i < x0.size(); ++i) {
      const double fd = oracle::central_difference(
          [&](const std::vector<double>& x) { return eval(std::span<const double>(x)); }, x0, i, 1e-6);
      EXPECT_NEAR(g[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << rep << " " << i;
    }
  }
}

TEST(HawkesModel, BatchSplitWithCarriedParticlesIsExact) {
  RngStream rng(10);
  const auto p = random_params(2, 2, rng);
  const auto ev = simulate(p, 200, 1e9, rng);
  ASSERT_EQ(ev.size(), 200u);
  SmcOptions o;
  o.particles = 6;
  o.policy = ResamplingPolicy::never();
  o.keep_history = false;
  Model<double> whole(p, nullptr, ev, 0, 200);
  SmcStreams s1(11);
  const double full = run_smc(whole, o, s1).log_z;

  SmcStreams s2(11);
  Model<double> m1(p, nullptr, ev, 0, 100), m2(p, nullptr, ev, 100, 200);
  ParticleFilter<Model<double>> f1(m1, o, s2);
  while (!f1.done()) f1.step();
  const auto carried = f1.carry();
  const double z1 = f1.finish().log_z;
  ParticleFilter<Model<double>> f2(m2, o, s2, &carried);
  const double z2 = f2.finish().log_z;
  EXPECT_NEAR(z1 + z2, full, 1e-10 * std::abs(full));
}

TEST(HawkesRecipe, LayoutAndScale) {
  RngStream rng(12);
  const auto p = random_params(2, 2, rng);
  const auto ev = simulate(p, 250, 1e9, rng);
  Recipe r(ev, 2, p.beta, 100);
  EXPECT_EQ(r.num_series(), 3u);
  EXPECT_DOUBLE_EQ(r.evidence_scale(0), 2.5);
  EXPECT_DOUBLE_EQ(r.evidence_scale(2), 5.0);
  const auto fam = r.initial_family();
  EXPECT_EQ(fam.size(), theta_size(2, 2));
  EXPECT_EQ(r.priors().size(), fam.size());
  EXPECT_EQ(r.initial_proposal().size(), 2u * 2 * 2 * 2);
  EXPECT_NEAR(sigmoid(fam[fam.size() - 1].mu), 0.01, 1e-12);
  const auto th = theta_from_params(p);
  const auto back = params_from_theta<double>(th, 2, 2, p.beta);
  EXPECT_EQ(back.alpha, p.alpha);
  EXPECT_EQ(back.sigma2, p.sigma2);
  EXPECT_EQ(back.nu, p.nu);
}

TEST(HawkesRecipe, CarriedStateRoundTrip) {
  RngStream rng(13);
  const auto p = random_params(1, 1, rng);
  const auto ev = simulate(p, 30, 1e9, rng);
  Recipe r(ev, 1, p.beta, 10);
  SmcOptions o;
  o.particles = 4;
  SmcStreams s(1);
  const auto th = theta_from_params(p);
  const auto phi = r.initial_proposal();
  r.run<double>(th, phi, 0, o, s);
  r.run<double>(th, phi, 1, o, s);
  const auto saved = r.save_state();
  Recipe r2(ev, 1, p.beta, 10);
  r2.load_state(saved);
  EXPECT_EQ(r2.save_state(), saved);
  SmcStreams sa(2), sb(2);
  EXPECT_EQ(r.run<double>(th, phi, 2, o, sa).log_z, r2.run<double>(th, phi, 2, o, sb).log_z);
}

TEST(HawkesLinearFit, RecoversSimulatedParameters) {
  const auto p = scalar_hawkes(1.0, 0.5, 1.5, 1e-6);
  RngStream rng(14);
  const auto ev = simulate(p, 4000, 1e9, rng);
  const std::vector<double> beta{1.5};
  const auto fit = fit_linear(ev, 1, beta, 400, 0.05);
  EXPECT_NEAR(fit.mu[0], 1.0, 0.2);
  EXPECT_NEAR(fit.alpha[0], 0.5, 0.1);
  const std::vector<double> mu0{1.0}, a0{0.5};
  EXPECT_GE(fit.loglik, linear_loglik(ev, 1, beta, mu0, a0) - 1e-6);
}

TEST(MarkPredictor, SingleMarkAlwaysPredictsIt) {
  RngStream rng(15);
  const auto p = random_params(1, 1, rng);
  const auto ev = simulate(p, 20, 1e9, rng);
  MarkPredictor mp(ev, 1, p.beta, nullptr, theta_from_params(p), {}, PredictorOptions{1, 5, 3}, RngStream(3));
  for (std::size_t n = 0; n < ev.size(); ++n) {
    const auto pr = mp.predict();
    EXPECT_EQ(pr.mark, 0u);
    EXPECT_EQ(pr.weighted_counts.size(), 1u);
    mp.advance();
  }
  EXPECT_THROW(mp.advance(), std::logic_error);
}

TEST(MarkPredictor, EmptyHistoryRejected) {
  const EventStream empty;
  const auto p = scalar_hawkes(1.0, 0.0, 1.0, 0.1);
  EXPECT_THROW(MarkPredictor(empty, 1, p.beta, nullptr, theta_from_params(p), {}, PredictorOptions{}, RngStream(1)),
               std::invalid_argument);
}

TEST(MarkPredictor, TiesGoToSmallestMark) {
  Params<double> p;
  p.D = 3;
  p.B = 1;
  p.mu = {0.0, 0.0, 0.0};
  p.alpha.assign(9, 0.0);
  p.sigma2.assign(9, 0.0);
  p.beta = {1.0};
  p.nu = 1e-3;
  // Background intensities underflow to zero: no draws, all counts tie at 0.
  p.mu = {-5.0, -5.0, -5.0};
  const EventStream ev{{1.0, 2}, {2.0, 1}};
  MarkPredictor mp(ev, 3, p.beta, nullptr, theta_from_params(p), {}, PredictorOptions{1, 2, 2}, RngStream(4));
  EXPECT_EQ(mp.predict().mark, 0u);
}
