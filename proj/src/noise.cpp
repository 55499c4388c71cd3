#include "dipstop/noise.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "dipstop/rng.hpp"

namespace dipstop {

namespace {

constexpr char kMagic[8] = {'D', 'P', 'P', 'N', '0', '0', '0', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

}  // namespace

PseudoNoise gen_gaussian_pn(int channels, int height, int width, double sigma,
                            std::uint64_t seed) {
  if (sigma <= 0.0) throw InvalidArgument("gen_gaussian_pn: sigma must be positive");
  PseudoNoise pn;
  pn.values = Image(channels, height, width);
  pn.kind = NoiseKind::kGaussian;
  pn.seed = seed;
  pn.sigma = sigma;
  Rng rng(seed);
  for (Eigen::Index j = 0; j < pn.values.size(); ++j)
    pn.values.data[j] = rng.normal(0.0, sigma);
  return pn;
}

PseudoNoise gen_sinusoid_pn(int channels, int height, int width, std::uint64_t seed) {
  PseudoNoise pn;
  pn.values = Image(channels, height, width);
  pn.kind = NoiseKind::kRowSinusoid;
  pn.seed = seed;
  pn.row_amp.resize(height);
  pn.row_freq.resize(height);
  const double w = static_cast<double>(width);
  for (int b = 0; b < height; ++b) {
    Rng row_rng = Rng::substream(seed, static_cast<std::uint64_t>(b));
    pn.row_amp[b] = row_rng.uniform(1.0 / 50.0, 1.0 / 25.0);
    pn.row_freq[b] = row_rng.uniform(std::numbers::pi * 20.0 / w,
                                     std::numbers::pi * 40.0 / w);
  }
  for (int a = 0; a < channels; ++a)
    for (int b = 0; b < height; ++b)
      for (int c = 0; c < width; ++c)
        pn.values(a, b, c) = pn.row_amp[b] * std::sin(pn.row_freq[b] * c);
  return pn;
}

PseudoNoise regenerate_pn(const PseudoNoise& pn) {
  const Image& v = pn.values;
  if (pn.kind == NoiseKind::kGaussian)
    return gen_gaussian_pn(v.channels, v.height, v.width, pn.sigma, pn.seed);

  // Sinusoids rebuild from the stored per-row parameters, not the seed, so a
  // hand-tweaked copy also round-trips.
  PseudoNoise out = pn;
  for (int a = 0; a < v.channels; ++a)
    for (int b = 0; b < v.height; ++b)
      for (int c = 0; c < v.width; ++c)
        out.values(a, b, c) = pn.row_amp[b] * std::sin(pn.row_freq[b] * c);
  return out;
}

void save_pn(const PseudoNoise& pn, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(kMagic, 8);
  put_u64(os, pn.kind == NoiseKind::kGaussian ? 0 : 1);
  put_u64(os, pn.seed);
  put_f64(os, pn.sigma);
  put_u64(os, static_cast<std::uint64_t>(pn.values.channels));
  put_u64(os, static_cast<std::uint64_t>(pn.values.height));
  put_u64(os, static_cast<std::uint64_t>(pn.values.width));
  if (pn.kind == NoiseKind::kRowSinusoid) {
    for (double a : pn.row_amp) put_f64(os, a);
    for (double f : pn.row_freq) put_f64(os, f);
  }
  for (Eigen::Index j = 0; j < pn.values.size(); ++j) put_f64(os, pn.values.data[j]);
  if (!os) throw IoError("short write: " + path);
}

PseudoNoise load_pn(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw DecodeError("bad pseudo-noise file header: " + path);
  PseudoNoise pn;
  const std::uint64_t kind = get_u64(is);
  if (kind > 1) throw DecodeError("bad pseudo-noise kind: " + path);
  pn.kind = kind == 0 ? NoiseKind::kGaussian : NoiseKind::kRowSinusoid;
  pn.seed = get_u64(is);
  pn.sigma = get_f64(is);
  const int c = static_cast<int>(get_u64(is));
  const int h = static_cast<int>(get_u64(is));
  const int w = static_cast<int>(get_u64(is));
  pn.values = Image(c, h, w);
  if (pn.kind == NoiseKind::kRowSinusoid) {
    pn.row_amp.resize(h);
    pn.row_freq.resize(h);
    for (int b = 0; b < h; ++b) pn.row_amp[b] = get_f64(is);
    for (int b = 0; b < h; ++b) pn.row_freq[b] = get_f64(is);
  }
  for (Eigen::Index j = 0; j < pn.values.size(); ++j) pn.values.data[j] = get_f64(is);
  if (!is) throw DecodeError("truncated pseudo-noise file: " + path);
  return pn;
}

}  // namespace dipstop
