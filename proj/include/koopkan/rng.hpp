#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace koopkan {

/// SplitMix64 generator (Steele, Lea & Flood). The output sequence is fully
/// determined by the 64-bit state, so results are bit-identical across
/// platforms. Independent streams are derived from (seed, index) by mixing
/// both into the initial state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  /// Stream `index` of `seed`.
  static Rng stream(std::uint64_t seed, std::uint64_t index) {
    Rng base(seed);
    const std::uint64_t s = base.next_u64();
    return Rng(s ^ mix(index + 0x632BE59BD9B4E019ULL));
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one draw per call; the pair's second
  /// value is discarded to keep the stream position simple).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace koopkan
