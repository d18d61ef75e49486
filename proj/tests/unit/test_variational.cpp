#include <gtest/gtest.h>

#include <cmath>

#include "smcvi/optim.hpp"
#include "smcvi/variational.hpp"

using namespace smcvi;

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;

ThetaDraw<double> draw_one(FactorKind kind, double mu, double v, double eta) {
  const FactorKind k[1] = {kind};
  const double m[1] = {mu}, s[1] = {v}, e[1] = {eta};
  return reparam_draw<double>(k, m, s, e);
}
}  // namespace

TEST(Variational, NormalAtMean) {
  const auto d = draw_one(FactorKind::Normal, 1.7, -0.4, 0.0);
  EXPECT_DOUBLE_EQ(d.theta[0], 1.7);
  EXPECT_NEAR(d.log_q, 0.4 - kHalfLog2Pi, 1e-14);
}

TEST(Variational, LogNormalAtOrigin) {
  const auto d = draw_one(FactorKind::LogNormal, 0.0, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(d.theta[0], 1.0);
  EXPECT_NEAR(d.log_q, -kHalfLog2Pi, 1e-14);
}

TEST(Variational, SigmoidJacobianMatchesNumericDerivative) {
  const double v = -0.3;
  const auto d = draw_one(FactorKind::SigmoidNormal, 0.0, v, 0.0);
  EXPECT_DOUBLE_EQ(d.theta[0], 0.5);
  const double h = 1e-6;
  const double dtheta = (1.0 / (1.0 + std::exp(-h)) - 1.0 / (1.0 + std::exp(h))) / (2.0 * h);
  EXPECT_NEAR(dtheta, 0.25, 1e-9);
  EXPECT_NEAR(d.log_q, -kHalfLog2Pi - v - std::log(dtheta), 1e-8);
}

TEST(Variational, TanhJacobianMatchesNumericDerivative) {
  for (double x : {-20.0, -1.3, 0.0, 0.4, 3.0}) {
    const double h = 1e-6;
    const double dtheta = (std::tanh(x + h) - std::tanh(x - h)) / (2.0 * h);
    if (dtheta > 1e-8) EXPECT_NEAR(factor_log_jacobian(FactorKind::TanhNormal, x), std::log(dtheta), 1e-6) << x;
    EXPECT_TRUE(std::isfinite(factor_log_jacobian(FactorKind::TanhNormal, x)));
  }
  EXPECT_NEAR(factor_inverse(FactorKind::TanhNormal, std::tanh(0.7)), 0.7, 1e-14);
}

TEST(Variational, SamplesStayInSupport) {
  MeanFieldFamily fam({{"a", FactorKind::Normal, 0.0, 1.0},
                       {"b", FactorKind::LogNormal, -3.0, 1.5},
                       {"c", FactorKind::SigmoidNormal, 4.0, 1.5},
                       {"d", FactorKind::TanhNormal, 2.5, 0.5}});
  RngStream rng(3);
  for (int i = 0; i < 10000; ++i) {
    const auto d = fam.sample(rng);
    EXPECT_GT(d.theta[1], 0.0);
    EXPECT_GT(d.theta[2], 0.0);
    EXPECT_LT(d.theta[2], 1.0);
    EXPECT_GT(d.theta[3], -1.0);
    EXPECT_LT(d.theta[3], 1.0);
  }
}

TEST(Variational, DensitiesIntegrateToOne) {
  for (auto kind : {FactorKind::Normal, FactorKind::LogNormal, FactorKind::SigmoidNormal, FactorKind::TanhNormal}) {
    MeanFieldFamily fam({{"x", kind, 0.0, 0.0}});
    // Integrate in the unconstrained coordinate x with dθ = θ'(x) dx.
    const int n = 200000;
    const double xlo = -12.0, xhi = 12.0, dx = (xhi - xlo) / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double x = xlo + dx * i;
      const double th = factor_transform(kind, x);
      const double w = (i == 0 || i == n) ? 0.5 : 1.0;
      const double t[1] = {th};
      acc += w * std::exp(fam.log_density(t) + factor_log_jacobian(kind, x)) * dx;
    }
    EXPECT_NEAR(acc, 1.0, 1e-4) << factor_kind_name(kind);
  }
}

TEST(Variational, KlOfFamilyWithItselfIsZeroPerSample) {
  MeanFieldFamily fam({{"a", FactorKind::Normal, 0.3, -1.0},
                       {"b", FactorKind::LogNormal, 0.5, -0.5},
                       {"c", FactorKind::SigmoidNormal, -1.0, 0.2},
                       {"d", FactorKind::TanhNormal, 0.8, -0.7}});
  RngStream rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto d = fam.sample(rng);
    EXPECT_NEAR(fam.log_density(d.theta) - d.log_q, 0.0, 1e-12);
  }
}

TEST(Variational, FactorKindRoundTrip) {
  for (auto k : {FactorKind::Normal, FactorKind::LogNormal, FactorKind::SigmoidNormal, FactorKind::TanhNormal}) {
    EXPECT_EQ(parse_factor_kind(factor_kind_name(k)), k);
  }
  EXPECT_THROW(parse_factor_kind("gamma"), std::invalid_argument);
}

TEST(Priors, NormalAtZero) {
  EXPECT_NEAR(log_prior(Prior::normal(0.0, 10.0), 0.0), -0.5 * std::log(20.0 * M_PI), 1e-14);
}

TEST(Priors, UniformSupport) {
  EXPECT_DOUBLE_EQ(log_prior(Prior::uniform(0.0, 1.0), 0.3), 0.0);
  EXPECT_EQ(log_prior(Prior::uniform(0.0, 1.0), 1.7), kNegInf);
}

TEST(Priors, GammaAgainstHighPrecisionGamma) {
  // Γ(0.01) = 99.4325851191506016320669886977 (30-digit evaluation).
  const double expect = 0.01 * std::log(0.01) - std::log(99.4325851191506016320669886977) - 0.01;
  EXPECT_NEAR(log_prior(Prior::gamma(0.01, 0.01), 1.0), expect, 1e-12);
  EXPECT_NEAR(expect, -4.65553157990190261621950940775, 1e-12);
  EXPECT_EQ(log_prior(Prior::gamma(0.01, 0.01), -1.0), kNegInf);
}

TEST(Priors, OtherKinds) {
  // LN(0,1) at 1: standard normal density at 0.
  EXPECT_NEAR(log_prior(Prior::log_normal(0.0, 1.0), 1.0), -kHalfLog2Pi, 1e-14);
  // IG(2, 3) at 1: 2 log 3 − log Γ(2) − 3 log 1 − 3.
  EXPECT_NEAR(log_prior(Prior::inverse_gamma(2.0, 3.0), 1.0), 2.0 * std::log(3.0) - 3.0, 1e-14);
  EXPECT_EQ(log_prior(Prior::inverse_gamma(2.0, 3.0), 0.0), kNegInf);
  // Gradient through a tape for the Gamma prior: (a−1)/θ − b.
  ad::Tape t;
  Var th = t.parameter(2.0);
  EXPECT_NEAR(t.gradient(log_prior(Prior::gamma(3.0, 0.5), th))[0], 2.0 / 2.0 - 0.5, 1e-14);
}

TEST(Fisher, ClosedFormBlocks) {
  auto b = fisher_block({"x", FactorKind::Normal, 0.0, 0.0});
  EXPECT_DOUBLE_EQ(b[0], 1.0);
  EXPECT_DOUBLE_EQ(b[1], 0.0);
  EXPECT_DOUBLE_EQ(b[2], 0.0);
  EXPECT_DOUBLE_EQ(b[3], 2.0);
  b = fisher_block({"x", FactorKind::LogNormal, 0.0, std::log(2.0)});
  EXPECT_NEAR(b[0], 0.25, 1e-15);
  EXPECT_DOUBLE_EQ(b[3], 2.0);
  EXPECT_THROW(fisher_block({"x", FactorKind::SigmoidNormal, 0.0, 0.0}), UnsupportedFactorError);
  EXPECT_THROW(fisher_block({"x", FactorKind::TanhNormal, 0.0, 0.0}), UnsupportedFactorError);
}

TEST(Fisher, MonteCarloScoreOuterProduct) {
  for (auto kind : {FactorKind::Normal, FactorKind::LogNormal}) {
    const double mu = 0.4, v = -0.3;
    MeanFieldFamily fam({{"x", kind, mu, v}});
    RngStream rng(17);
    double s00 = 0.0, s01 = 0.0, s11 = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
      const auto d = fam.sample(rng);
      // Score of log q in (mu, v), computed on a tape at the sampled θ.
      ad::Tape t;
      Var m = t.parameter(mu), s = t.parameter(v);
      const double x = factor_inverse(kind, d.theta[0]);
      Var lq = normal_logpdf_logsd(Var(x), m, s) - factor_log_jacobian(kind, Var(x));
      const auto g = t.gradient(lq);
      s00 += g[0] * g[0];
      s01 += g[0] * g[1];
      s11 += g[1] * g[1];
    }
    const auto b = fisher_block(fam[0]);
    EXPECT_NEAR(s00 / n, b[0], 0.01 * b[0]);
    EXPECT_NEAR(s11 / n, b[3], 0.01 * b[3]);
    EXPECT_NEAR(s01 / n, 0.0, 0.01 * std::sqrt(b[0] * b[3]));
  }
}

TEST(Reparam, GradientOfSecondMoment) {
  const double mu = 0.7, v = -0.2;
  RngStream rng(23);
  double gm = 0.0, gv = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    ad::Tape t;
    Var m = t.parameter(mu), s = t.parameter(v);
    const FactorKind k[1] = {FactorKind::Normal};
    const Var ms[1] = {m}, ss[1] = {s};
    const double e[1] = {rng.normal()};
    const auto d = reparam_draw<Var>(k, ms, ss, e);
    const auto g = t.gradient(d.theta[0] * d.theta[0]);
    gm += g[0];
    gv += g[1];
  }
  EXPECT_NEAR(gm / n, 2.0 * mu, 0.01 * 2.0 * mu);
  EXPECT_NEAR(gv / n, 2.0 * std::exp(2.0 * v), 0.01 * 2.0 * std::exp(2.0 * v));
}

TEST(NaturalGradient, RescalesNormalFactor) {
  MeanFieldFamily fam({{"x", FactorKind::Normal, 0.0, 0.0}, {"y", FactorKind::LogNormal, 0.0, std::log(3.0)}});
  const double gm[2] = {1.5, -2.0}, gv[2] = {0.8, 4.0};
  const auto d = natural_gradient(fam, gm, gv);
  EXPECT_DOUBLE_EQ(d[0], 1.5);
  EXPECT_DOUBLE_EQ(d[2], 0.4);
  EXPECT_NEAR(d[1], -2.0 * 9.0, 1e-12);
  EXPECT_DOUBLE_EQ(d[3], 2.0);
}

TEST(NaturalGradient, InvariantToScaleParameterization) {
  // (mu, σ) coordinates: Fisher diag(1/σ², 2/σ²), ∂L/∂σ = ∂L/∂v / σ.
  const double mu = 0.2, sigma = 0.35, g_mu = 1.3, g_v = -0.7;
  MeanFieldFamily fam({{"x", FactorKind::Normal, mu, std::log(sigma)}});
  const double gm[1] = {g_mu}, gv[1] = {g_v};
  const auto nat_v = natural_gradient(fam, gm, gv);
  const double g_sigma = g_v / sigma;
  const double nat_mu_s = sigma * sigma * g_mu;
  const double nat_sigma = sigma * sigma / 2.0 * g_sigma;
  // Push the v-direction into σ space: dσ = σ dv.
  EXPECT_NEAR(nat_v[0], nat_mu_s, 1e-10);
  EXPECT_NEAR(sigma * nat_v[1], nat_sigma, 1e-10);
}

TEST(NaturalGradient, UpdateZeroIsNoOpAndSigmoidFallsBack) {
  MeanFieldFamily fam({{"x", FactorKind::Normal, 0.3, -1.0}, {"nu", FactorKind::SigmoidNormal, -2.0, -1.0}});
  const std::vector<double> zero(4, 0.0);
  const auto same = natural_update(fam, zero, 0.1);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(same[i].mu, fam[i].mu);
    EXPECT_EQ(same[i].v, fam[i].v);
  }
  const std::vector<double> g{1.0, 1.0, 1.0, 1.0};
  const auto up = natural_update(fam, g, 0.1);
  EXPECT_NEAR(up[1].mu, -2.0 + 0.1, 1e-15);
  EXPECT_NEAR(up[1].v, -1.0 + 0.1, 1e-15);
  EXPECT_NEAR(up[0].mu, 0.3 + 0.1 * std::exp(-2.0), 1e-15);
  EXPECT_NEAR(up[0].v, -1.0 + 0.05, 1e-15);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> p{1.0, -2.0};
  const std::vector<double> g{0.0, 0.0};
  AdamState s;
  for (int i = 0; i < 5; ++i) adam_update(p, g, s, {});
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], -2.0);
}

TEST(Adam, FirstStepIsStepSize) {
  std::vector<double> p{0.0};
  const std::vector<double> g{1.0};
  AdamState s;
  adam_update(p, g, s, {});
  EXPECT_NEAR(p[0], -0.001, 1e-10);
}

TEST(Adam, ConstantGradientStepTendsToSign) {
  std::vector<double> p{0.0, 0.0};
  const std::vector<double> g{3.0, -0.02};
  AdamState s;
  for (int i = 0; i < 20000; ++i) adam_update(p, g, s, {});
  const std::vector<double> before = p;
  adam_update(p, g, s, {});
  EXPECT_NEAR(p[0] - before[0], -0.001, 1e-8);
  EXPECT_NEAR(p[1] - before[1], 0.001, 1e-8);
}

TEST(Adam, SizeMismatchThrows) {
  std::vector<double> p{0.0};
  const std::vector<double> g{1.0};
  AdamState s;
  adam_update(p, g, s, {});
  std::vector<double> p2{0.0, 1.0};
  const std::vector<double> g2{1.0, 1.0};
  EXPECT_THROW(adam_update(p2, g2, s, {}), std::invalid_argument);
}
