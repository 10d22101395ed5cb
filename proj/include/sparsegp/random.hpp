#pragma once

// Counter-based random numbers: every draw is a pure function of its key, so
// Monte Carlo objectives are reproducible regardless of evaluation order.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace sparsegp {

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0, std::uint64_t d = 0) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return mix64(h ^ d);
}

/// Uniform in the open interval (0, 1).
inline double counter_uniform(std::uint64_t key) {
  return (static_cast<double>(key >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal draw keyed by (seed, a, b, c) via Box-Muller.
inline double counter_normal(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                             std::uint64_t c = 0) {
  const double u1 = counter_uniform(hash_key(seed, a, b, c, 1));
  const double u2 = counter_uniform(hash_key(seed, a, b, c, 2));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace sparsegp
