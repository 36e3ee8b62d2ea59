#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace featureness {

/// Deterministic random source. All distributions are implemented by hand on
/// top of the (standardized) mt19937_64 stream so that results are
/// bit-identical across compilers and platforms; std:: distributions carry no
/// such guarantee.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(scramble(seed)), seed_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be > 0.
  uint64_t uniform_index(uint64_t n) {
    // Rejection sampling keeps the draw unbiased for any n.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller (one value per call, no caching, so the
  /// stream position is a pure function of the call count).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Child stream for an independent subsystem. The label keeps derivations
  /// stable when new call sites are added.
  Rng derive(std::string_view label) const {
    uint64_t h = 1469598103934665603ull;  // FNV-1a 64
    for (const char c : label) {
      h ^= static_cast<uint8_t>(c);
      h *= 1099511628211ull;
    }
    return Rng(seed_ ^ h);
  }

  Rng derive(uint64_t salt) const { return Rng(seed_ ^ scramble(salt)); }

  uint64_t seed() const { return seed_; }

 private:
  static uint64_t scramble(uint64_t x) {
    // splitmix64 finalizer; decorrelates nearby seeds.
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
  uint64_t seed_ = 0;
};

}  // namespace featureness
