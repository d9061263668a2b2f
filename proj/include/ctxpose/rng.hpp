#pragma once

#include <cstdint>
#include <random>

namespace ctxpose {

// Seedable, splittable generator. Streams are derived from (seed, key) with
// SplitMix64 so per-sample generation does not depend on iteration order.
// Distributions are implemented here rather than taken from <random> because
// the standard distributions are not bit-reproducible across library vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  Rng split(std::uint64_t key) const;
  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();  // standard normal, Box-Muller
  std::uint64_t below(std::uint64_t n);  // [0, n)

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace ctxpose
