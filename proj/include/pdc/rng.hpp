#pragma once

#include <cstdint>

namespace pdc {

/// SplitMix64 (Steele, Lea, Flood). Used only to expand a user seed into the
/// xoshiro state so every language can reproduce the same stream.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : s_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (s_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t s_;
};

/// xoshiro256** 1.0 (Blackman, Vigna).
///
/// Reference stream: seed 42 -> state from four SplitMix64(42) draws, then
/// next() = rotl(s1 * 5, 7) * 9 with the standard xor/shift update.
/// Derived quantities are defined bit-exactly:
///   uniform()   = (next() >> 11) * 2^-53           in [0, 1)
///   below(n)    = rejection: draw r = next(), reject while r < (2^64 mod n),
///                 return r mod n
///   coin()      = top bit of next()
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    SplitMix64 sm(seed);
    for (auto& w : s_) w = sm.next();
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per call, second discarded).
  double normal();

  std::uint64_t below(std::uint64_t n) {
    // 2^64 mod n computed as (-n) mod n in unsigned arithmetic.
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

  bool coin() { return (next() >> 63) != 0; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4];
};

}  // namespace pdc

#include <cmath>

inline double pdc::Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}
