#include "smcvi/optim.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace smcvi {

void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state,
                 const AdamConfig& config) {
  const std::size_t n = params.size();
  if (grads.size() != n) throw std::invalid_argument("adam: gradient size mismatch");
  if (state.m.empty() && state.t == 0) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  }
  if (state.m.size() != n || state.v.size() != n) throw std::invalid_argument("adam: state size mismatch");
  ++state.t;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= config.step_size * mhat / (std::sqrt(vhat) + config.eps);
  }
}

std::vector<double> natural_gradient(const MeanFieldFamily& family, std::span<const double> grad_mu,
                                     std::span<const double> grad_v, std::vector<std::string>* skipped) {
  const std::size_t n = family.size();
  std::vector<double> out(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Factor& f = family[i];
    if (f.kind == FactorKind::SigmoidNormal || f.kind == FactorKind::TanhNormal) {
      out[i] = grad_mu[i];
      out[n + i] = grad_v[i];
      if (skipped) skipped->push_back(f.name);
      continue;
    }
    out[i] = std::exp(2.0 * f.v) * grad_mu[i];
    out[n + i] = 0.5 * grad_v[i];
  }
  return out;
}

MeanFieldFamily natural_update(const MeanFieldFamily& family, std::span<const double> grads,
                               double step_size) {
  const std::size_t n = family.size();
  if (grads.size() != 2 * n) throw std::invalid_argument("natural_update: expected 2 gradients per factor");
  std::vector<std::string> skipped;
  const auto dir = natural_gradient(family, grads.subspan(0, n), grads.subspan(n, n), &skipped);
  if (!skipped.empty()) {
    std::cerr << "warning: no Fisher block for sigmoid-normal factor(s):";
    for (const auto& s : skipped) std::cerr << ' ' << s;
    std::cerr << "; using the plain gradient\n";
  }
  MeanFieldFamily out = family;
  for (std::size_t i = 0; i < n; ++i) {
    out[i].mu += step_size * dir[i];
    out[i].v += step_size * dir[n + i];
  }
  return out;
}

}  // namespace smcvi
