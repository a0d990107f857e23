#pragma once

#include <cmath>
#include <cstdint>

namespace geothinker {

// SplitMix64 finalizer; the workhorse behind every draw.
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Counter-based generator: draw i of stream k is mix64(key_k + i * golden).
// split(tag) derives an independent stream whose draws never perturb the
// parent, so weights / data / noise stay stable as code evolves.
class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(mix64(seed)) {}

  Rng split(uint64_t tag) const {
    return Rng(key_ ^ mix64(tag ^ 0x5851f42d4c957f2dull), 0);
  }

  uint64_t next_u64() {
    return mix64(key_ + 0x9e3779b97f4a7c15ull * ++counter_);
  }

  // uniform in [0, 1), 53-bit resolution
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one value per call so the draw count stays predictable
  double normal() {
    double u1 = uniform();
    while (u1 == 0.0) u1 = uniform();
    double u2 = uniform();
    constexpr double two_pi = 6.283185307179586476925287;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

 private:
  Rng(uint64_t key, uint64_t counter) : key_(key), counter_(counter) {}
  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

// conventional stream tags
namespace rng_stream {
constexpr uint64_t weights = 1;
constexpr uint64_t data = 2;
constexpr uint64_t noise = 3;
constexpr uint64_t mask = 4;
}  // namespace rng_stream

}  // namespace geothinker
