#pragma once

// Counter-based random streams.
//
// A Stream is (key, counter). Draw i returns Mix(key + (i + 1) * kGolden),
// where Mix is the SplitMix64 finalizer, so any draw can be recomputed from
// its index alone. Sub-streams derive their key by hashing the parent key
// with a string tag and an integer index; derivation is independent of how
// many values the parent has produced.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace deferral::rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t Mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a.
constexpr std::uint64_t Fnv1a(std::string_view text,
                              std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (char ch : text) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t Combine(std::uint64_t a, std::uint64_t b) {
  return Mix(a ^ Mix(b + kGolden));
}

class Stream {
 public:
  constexpr explicit Stream(std::uint64_t seed) : key_(Mix(seed)) {}

  constexpr Stream Derive(std::string_view tag, std::uint64_t index = 0) const {
    Stream child(0);
    child.key_ = Combine(Combine(key_, Fnv1a(tag)), index);
    return child;
  }

  constexpr std::uint64_t NextU64() {
    ++counter_;
    return Mix(key_ + counter_ * kGolden);
  }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double Uniform() {
    return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
  }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  /// Uniform integer in [0, bound) by rejection, bound > 0.
  constexpr std::uint64_t Below(std::uint64_t bound) {
    const std::uint64_t limit = -bound % bound;
    for (;;) {
      const std::uint64_t x = NextU64();
      if (x >= limit) return x % bound;
    }
  }

  /// Uniform integer in [lo, hi].
  int Between(int lo, int hi) {
    return lo + static_cast<int>(Below(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  /// Standard normal via Box-Muller; one draw per call.
  double Normal() {
    const double u1 = 1.0 - Uniform();
    const double u2 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Standard exponential.
  double Exponential() { return -std::log(1.0 - Uniform()); }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace deferral::rng
