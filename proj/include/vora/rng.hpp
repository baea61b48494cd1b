#pragma once

#include "vora/real.hpp"

#include <cstdint>
#include <random>
#include <vector>

#include "vora/tensor.hpp"

VORA_BEGIN_NAMESPACE

/// Seed derivation: a pure function of (seed, stream), so independent
/// consumers never share a random stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Deterministic generator built on the standard-specified mt19937_64.
/// Distributions are mapped by hand so the sequence does not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();

  Tensor normal_tensor(const Shape& shape, real stddev);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

VORA_END_NAMESPACE
