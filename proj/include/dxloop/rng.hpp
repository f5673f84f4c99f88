// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace dxloop {

/// Seeded random stream. Wraps std::mt19937_64 and owns the mapping from raw
/// engine output to doubles and integers, so sampled values do not depend on
/// the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Stream for item `index` of a run seeded with `seed`.
  static Rng derive(std::uint64_t seed, std::uint64_t index);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform();

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  double normal();

  /// Index sampled proportionally to non-negative `weights`.
  std::size_t categorical(std::span<const double> weights);

  std::string serialize() const;
  void deserialize(const std::string& text);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace dxloop
