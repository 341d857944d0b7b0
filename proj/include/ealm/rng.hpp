// Copyright 2026 The EALM Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef EALM_RNG_HPP_
#define EALM_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace ealm {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

/// Counter-based generator: the i-th draw of stream (seed, name) is a pure
/// function of (seed, name, i), so tensors can be initialized independently
/// and in any order.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::string_view stream)
      : key_(splitmix64(seed ^ splitmix64(fnv1a(stream)))) {}

  std::uint64_t bits(std::uint64_t counter) const {
    return splitmix64(key_ + splitmix64(counter));
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  double uniform(std::uint64_t counter, double lo, double hi) const {
    return lo + (hi - lo) * uniform01(counter);
  }

  /// Standard normal via Box-Muller on draws 2i and 2i+1.
  double normal(std::uint64_t counter) const {
    double u1 = uniform01(2 * counter);
    double u2 = uniform01(2 * counter + 1);
    if (u1 < 0x1.0p-60) u1 = 0x1.0p-60;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
};

/// Sequential wrapper over CounterRng for call sites that just need a stream.
class Stream {
 public:
  Stream(std::uint64_t seed, std::string_view name) : rng_(seed, name) {}

  std::uint64_t next_bits() { return rng_.bits(counter_++); }
  double uniform01() { return rng_.uniform01(counter_++); }
  double uniform(double lo, double hi) { return rng_.uniform(counter_++, lo, hi); }
  double normal() { return rng_.normal(counter_++); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_bits() % n; }

 private:
  CounterRng rng_;
  std::uint64_t counter_ = 0;
};

}  // namespace ealm

#endif  // EALM_RNG_HPP_
