#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "eftcl/tensor.hpp"

namespace eftcl {

/// Deterministic RNG. The mt19937_64 engine and the mappings below are fully
/// specified, so a seed reproduces the same stream on any platform (the
/// standard library distributions are implementation-defined, which is why
/// we roll our own normal/uniform mappings).
/// splitmix64 finalizer; derives independent stream seeds from a base seed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (spare cached).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  std::int64_t uniform_int(std::int64_t n);

  void fill_normal(Tensor& t, double stddev, double mean = 0.0);

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::int64_t> permutation(std::int64_t n);

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace eftcl
