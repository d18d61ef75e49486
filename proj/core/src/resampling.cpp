#include "smcvi/resampling.hpp"

#include <cmath>

namespace smcvi {

double effective_sample_size(std::span<const double> log_w) {
  double s = 0.0;
  for (double lw : log_w) {
    const double w = std::exp(lw);
    s += w * w;
  }
  return 1.0 / s;
}

bool should_resample(const ResamplingPolicy& policy, std::span<const double> log_w) {
  if (policy.mode == ResamplingPolicy::Mode::Always) return true;
  return effective_sample_size(log_w) < policy.threshold * static_cast<double>(log_w.size());
}

std::vector<std::uint32_t> resample(ResamplingPolicy::Scheme scheme, std::span<const double> log_w,
                                    std::size_t count, RngStream& rng) {
  const std::size_t k = log_w.size();
  std::vector<double> cdf(k);
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    acc += std::exp(log_w[i]);
    cdf[i] = acc;
  }
  // Normalized weights may sum to 1 ± ulp; scale the targets instead.
  std::vector<double> u(count);
  if (scheme == ResamplingPolicy::Scheme::Systematic) {
    const double u0 = rng.uniform();
    for (std::size_t j = 0; j < count; ++j) u[j] = (static_cast<double>(j) + u0) / count * acc;
  } else {
    // Sorted uniforms via normalized exponential spacings: O(count).
    double total = 0.0;
    for (std::size_t j = 0; j < count; ++j) {
      total += rng.exponential();
      u[j] = total;
    }
    total += rng.exponential();
    for (auto& x : u) x = x / total * acc;
  }
  std::vector<std::uint32_t> out(count);
  std::size_t i = 0;
  for (std::size_t j = 0; j < count; ++j) {
    while (i + 1 < k && cdf[i] < u[j]) ++i;
    out[j] = static_cast<std::uint32_t>(i);
  }
  return out;
}

std::uint32_t sample_index(std::span<const double> log_w, RngStream& rng) {
  double acc = 0.0;
  for (double lw : log_w) acc += std::exp(lw);
  const double u = rng.uniform() * acc;
  double c = 0.0;
  for (std::size_t i = 0; i < log_w.size(); ++i) {
    c += std::exp(log_w[i]);
    if (u < c) return static_cast<std::uint32_t>(i);
  }
  return static_cast<std::uint32_t>(log_w.size() - 1);
}

}  // namespace smcvi
