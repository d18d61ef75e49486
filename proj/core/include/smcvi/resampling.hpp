#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "smcvi/random.hpp"

namespace smcvi {

struct ResamplingPolicy {
  enum class Mode { Always, EssThreshold };
  enum class Scheme { Multinomial, Systematic };

  Mode mode = Mode::Always;
  /// Resample when ESS < threshold·K (EssThreshold mode only).
  double threshold = 0.5;
  Scheme scheme = Scheme::Multinomial;

  static ResamplingPolicy always() { return {}; }
  static ResamplingPolicy ess(double fraction = 0.5) {
    return {Mode::EssThreshold, fraction, Scheme::Multinomial};
  }
  /// ESS can never drop below zero, so this disables resampling.
  static ResamplingPolicy never() { return {Mode::EssThreshold, 0.0, Scheme::Multinomial}; }
};

/// 1 / Σ W², for normalized weights given in log space.
double effective_sample_size(std::span<const double> log_normalized_weights);

bool should_resample(const ResamplingPolicy& policy, std::span<const double> log_normalized_weights);

/// Draws `count` ancestor indices (0-based) from normalized weights.
std::vector<std::uint32_t> resample(ResamplingPolicy::Scheme scheme,
                                    std::span<const double> log_normalized_weights,
                                    std::size_t count, RngStream& rng);

/// Single categorical draw.
std::uint32_t sample_index(std::span<const double> log_normalized_weights, RngStream& rng);

}  // namespace smcvi
