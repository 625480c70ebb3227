#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace tcdetect {

// Deterministic pseudo-random generator used by every stochastic operation
// in the library. The algorithm is fixed so that streams are reproducible
// across platforms and compilers:
//
//   state seeding : splitmix64 (Steele, Lea & Flood), which also guarantees
//                   a nonzero initial state
//   stream        : xorshift64* (Marsaglia / Vigna), shifts 12/25/27,
//                   multiplier 0x2545F4914F6CDD1D
//   uniform [0,1) : top 53 bits of the output scaled by 2^-53
//   normal        : Box-Muller on two uniform draws, both values consumed
//
// Never use std::mt19937 / std::*_distribution here: their output is
// implementation-defined and would break bit-reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ kSeedTweak)) {
    if (state_ == 0) state_ = kSeedTweak;
  }

  std::uint64_t next_u64() {
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  // Uniform double in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform double in [lo, hi).
  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Uniform integer in [0, n). Rejection sampling keeps the draw unbiased.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  // Standard normal via Box-Muller; the pair is cached so consecutive calls
  // consume both values of each transform.
  double next_normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    // u1 in (0,1] so the log is finite.
    const double u1 = 1.0 - next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  bool next_bool(double p_true) { return next_double() < p_true; }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

 private:
  static constexpr std::uint64_t kSeedTweak = 0xA02F1C5D9E8B4763ULL;

  std::uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

// Derives an independent stream seed from a base seed and a sequence of
// tags (epoch index, batch index, parameter index...). Derivation chains
// splitmix64 so distinct tag sequences give unrelated streams.
inline std::uint64_t mix_seed(std::uint64_t seed) { return Rng::splitmix64(seed); }

template <typename... Rest>
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag, Rest... rest) {
  return mix_seed(Rng::splitmix64(seed ^ (tag + 0x9E3779B97F4A7C15ULL)), rest...);
}

}  // namespace tcdetect
