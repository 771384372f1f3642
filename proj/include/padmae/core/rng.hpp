// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace padmae {

/// Derives an independent 64-bit seed from a root seed, a stream name and up
/// to two indices (e.g. image index and epoch). Used for the named substreams
/// (crop, mask, init, probe).
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                          std::uint64_t a = 0, std::uint64_t b = 0);

/// Thin wrapper over std::mt19937_64. The distributions are written out here
/// instead of using <random> distributions so that draws are identical across
/// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi].
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal();

  std::string serialize() const;
  void deserialize(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace padmae
