#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dipstop {

// SplitMix64 finalizer, used for seed conditioning and sub-stream derivation.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seeded generator with hand-pinned value mappings. std::mt19937_64 is fully
// specified by the standard, so identical seeds give identical raw streams on
// every conforming platform; the distributions are implemented here because
// std::normal_distribution / std::uniform_real_distribution are not pinned.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(mix64(seed)) {}

  // Sub-stream rule: stream k of seed s behaves as an independent generator
  // seeded with s ^ mix64(k + 1).
  static Rng substream(std::uint64_t seed, std::uint64_t stream) {
    return Rng(seed ^ mix64(stream + 1));
  }

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0,1) with 53-bit resolution.
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via the Marsaglia polar method; the spare draw is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dipstop
