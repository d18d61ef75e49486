#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smcvi/variational.hpp"

namespace smcvi {

struct AdamConfig {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam step that *descends* `grads`. State vectors are
/// sized on first use; a size mismatch afterwards throws.
void adam_update(std::span<double> params, std::span<const double> grads, AdamState& state,
                 const AdamConfig& config);

/// diag(e^{2v}, 1/2)·(g_mu, g_v) per factor. Sigmoid- and tanh-normal factors pass
/// through unchanged and their names are appended to `skipped`.
std::vector<double> natural_gradient(const MeanFieldFamily& family, std::span<const double> grad_mu,
                                     std::span<const double> grad_v,
                                     std::vector<std::string>* skipped = nullptr);

/// Ascent step ψ ← ψ + step·I(ψ)^{-1}∇ψ. Gradients are laid out as
/// (mu_0..mu_{n-1}, v_0..v_{n-1}). Unsupported factors take a plain step and
/// a warning is logged once per call.
MeanFieldFamily natural_update(const MeanFieldFamily& family, std::span<const double> grads,
                               double step_size);

}  // namespace smcvi
