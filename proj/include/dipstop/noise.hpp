#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dipstop/image.hpp"

namespace dipstop {

enum class NoiseKind { kGaussian, kRowSinusoid };

// A known perturbation added to the corrupted observation, plus everything
// needed to regenerate it bit-exactly.
struct PseudoNoise {
  Image values;
  NoiseKind kind = NoiseKind::kGaussian;
  std::uint64_t seed = 0;
  double sigma = 0.0;            // gaussian only
  std::vector<double> row_amp;   // sinusoid only, one per row
  std::vector<double> row_freq;  // sinusoid only, radians per column
};

// I.i.d. zero-mean gaussian with the given sigma, one element per pixel per
// channel, drawn in planar index order from a single stream.
PseudoNoise gen_gaussian_pn(int channels, int height, int width, double sigma,
                            std::uint64_t seed);

// Per-row sinusoid: value(a, b, c) = A_b * sin(theta_b * c) with zero-based
// column c, A_b ~ U(1/50, 1/25), theta_b ~ U(pi*20/W, pi*40/W). One (A, theta)
// pair per row b, shared across channels; row b draws from sub-stream b.
PseudoNoise gen_sinusoid_pn(int channels, int height, int width, std::uint64_t seed);

// Rebuilds values from the stored parameters; bit-identical to the original.
PseudoNoise regenerate_pn(const PseudoNoise& pn);

// Audit file: small header (magic, version, kind, seed, sigma, shape, row
// parameters) followed by the raw values as little-endian doubles.
void save_pn(const PseudoNoise& pn, const std::string& path);
PseudoNoise load_pn(const std::string& path);

}  // namespace dipstop
