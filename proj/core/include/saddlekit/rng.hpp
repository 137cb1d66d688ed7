#pragma once

#include <cstdint>

#include "saddlekit/types.hpp"

namespace saddlekit::rng {

/// SplitMix64 finalizer; a stateless 64-bit avalanche.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Hash a (key, counter) tuple into one 64-bit word.  Outputs for distinct
/// tuples are independent for all practical purposes, which is what makes the
/// stream splittable: any worker can evaluate any draw without shared state.
constexpr std::uint64_t hash_key(std::uint64_t k0, std::uint64_t k1, std::uint64_t k2,
                                 std::uint64_t k3, std::uint64_t counter) {
  std::uint64_t h = mix64(k0 ^ 0x243f6a8885a308d3ULL);
  h = mix64(h ^ mix64(k1));
  h = mix64(h ^ mix64(k2));
  h = mix64(h ^ mix64(k3));
  return mix64(h ^ mix64(counter));
}

/// Counter-based random stream keyed by four 64-bit words.  Draws depend only
/// on the key and the draw index, never on call order across streams, so
/// identically keyed streams reproduce identical sequences on any thread.
class CounterStream {
 public:
  explicit CounterStream(std::uint64_t k0, std::uint64_t k1 = 0, std::uint64_t k2 = 0,
                         std::uint64_t k3 = 0)
      : k0_(k0), k1_(k1), k2_(k2), k3_(k3) {}

  std::uint64_t next_u64() { return hash_key(k0_, k1_, k2_, k3_, counter_++); }

  /// Uniform in (0, 1]; never returns 0 so log() is safe.
  double next_uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; pairs are cached.
  double next_normal();

  /// Rademacher +/-1.
  double next_sign() { return (next_u64() & 1u) ? 1.0 : -1.0; }

  Vec normals(int n);

  std::uint64_t draws_consumed() const { return counter_; }

 private:
  std::uint64_t k0_, k1_, k2_, k3_;
  std::uint64_t counter_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Order-independent digest of a vector's bit patterns, used to audit that
/// paired runs consumed identical noise draws.
std::uint64_t digest(const Vec& v);

}  // namespace saddlekit::rng
