#pragma once

#include <cstdint>
#include <random>

namespace smcvi {

/// Seeded random stream. Child streams are derived deterministically from
/// the parent seed and a key, so a root seed fans out hierarchically
/// (iteration -> series -> particle stream) without shared state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0);

  RngStream child(std::uint64_t key) const;
  std::uint64_t seed() const noexcept { return seed_; }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Exponential with unit rate.
  double exponential();
  std::uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key) noexcept;

/// The two substreams an SMC run consumes. Proposal noise and discrete
/// ancestry decisions never share draws, so a run with frozen ancestry
/// replays the same noise.
struct SmcStreams {
  RngStream noise;
  RngStream ancestry;

  explicit SmcStreams(std::uint64_t seed)
      : noise(mix_seed(seed, 0x6e6f697365ULL)), ancestry(mix_seed(seed, 0x616e63ULL)) {}
  explicit SmcStreams(const RngStream& parent) : SmcStreams(parent.seed()) {}
};

}  // namespace smcvi
