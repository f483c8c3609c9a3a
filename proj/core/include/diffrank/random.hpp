#pragma once

#include <cstdint>

namespace diffrank {

// Small deterministic generator (xoshiro256**). Hand-rolled so that seeded
// runs reproduce bit-identically regardless of the standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  /// Uniform double in [0, 1).
  double next_double();

  /// Uniform double in [lo, hi).
  double next_uniform(double lo, double hi);

  /// Standard normal via Box-Muller.
  double next_gaussian();

  /// Uniform integer in [0, n), n > 0.
  std::uint64_t next_below(std::uint64_t n);

  /// Independent substream; `stream` selects which one.
  Rng split(std::uint64_t stream) const;

 private:
  std::uint64_t state_[4];
};

}  // namespace diffrank
