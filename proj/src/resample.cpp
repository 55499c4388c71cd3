#include "dipstop/resample.hpp"

#include <cmath>
#include <numbers>

namespace dipstop {

namespace {

double lanczos_window(double t, int a) {
  const double at = std::abs(t);
  if (at >= static_cast<double>(a)) return 0.0;
  if (at < 1e-12) return 1.0;
  const double pt = std::numbers::pi * t;
  return static_cast<double>(a) * std::sin(pt) * std::sin(pt / a) / (pt * pt);
}

// Symmetric reflection (edge repeated: ...cba|abc...), folded until in range.
int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -1 - i;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

void check_factor(int factor) {
  if (factor != 4 && factor != 8)
    throw InvalidArgument("lanczos_downsample: factor must be 4 or 8");
}

// Filters along the width axis of (channels, height, n_in) into n_out samples.
void apply_rows(const Image& in, Image& out, const LanczosKernel& k) {
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < in.height; ++y) {
      const double* src = in.data.data() + in.index(c, y, 0);
      double* dst = out.data.data() + out.index(c, y, 0);
      for (size_t o = 0; o < k.rows.size(); ++o) {
        const auto& taps = k.rows[o];
        double acc = 0.0;
        for (size_t t = 0; t < taps.w.size(); ++t) acc += taps.w[t] * src[taps.start + t];
        dst[o] = acc;
      }
    }
}

// Filters along the height axis.
void apply_cols(const Image& in, Image& out, const LanczosKernel& k) {
  for (int c = 0; c < in.channels; ++c)
    for (size_t o = 0; o < k.rows.size(); ++o) {
      const auto& taps = k.rows[o];
      for (int x = 0; x < in.width; ++x) {
        double acc = 0.0;
        for (size_t t = 0; t < taps.w.size(); ++t)
          acc += taps.w[t] * in(c, taps.start + static_cast<int>(t), x);
        out(c, static_cast<int>(o), x) = acc;
      }
    }
}

// Transposes of the two passes: scatter instead of gather.
void scatter_rows(const Image& grad, Image& out, const LanczosKernel& k) {
  for (int c = 0; c < grad.channels; ++c)
    for (int y = 0; y < grad.height; ++y) {
      const double* src = grad.data.data() + grad.index(c, y, 0);
      double* dst = out.data.data() + out.index(c, y, 0);
      for (size_t o = 0; o < k.rows.size(); ++o) {
        const auto& taps = k.rows[o];
        for (size_t t = 0; t < taps.w.size(); ++t) dst[taps.start + t] += taps.w[t] * src[o];
      }
    }
}

void scatter_cols(const Image& grad, Image& out, const LanczosKernel& k) {
  for (int c = 0; c < grad.channels; ++c)
    for (size_t o = 0; o < k.rows.size(); ++o) {
      const auto& taps = k.rows[o];
      for (int x = 0; x < grad.width; ++x) {
        const double g = grad(c, static_cast<int>(o), x);
        for (size_t t = 0; t < taps.w.size(); ++t)
          out(c, taps.start + static_cast<int>(t), x) += taps.w[t] * g;
      }
    }
}

}  // namespace

LanczosKernel LanczosKernel::build(int n_in, int factor, int lobes) {
  if (n_in <= 0 || factor <= 0 || lobes <= 0)
    throw InvalidArgument("LanczosKernel: bad parameters");
  if (n_in % factor != 0)
    throw InvalidArgument("LanczosKernel: size not divisible by factor");
  LanczosKernel k;
  k.lobes = lobes;
  k.factor = factor;
  const int n_out = n_in / factor;
  k.rows.resize(n_out);
  const double support = static_cast<double>(lobes) * factor;
  std::vector<double> folded(n_in);
  for (int o = 0; o < n_out; ++o) {
    const double center = (o + 0.5) * factor - 0.5;
    const int lo = static_cast<int>(std::ceil(center - support));
    const int hi = static_cast<int>(std::floor(center + support));
    std::fill(folded.begin(), folded.end(), 0.0);
    double sum = 0.0;
    for (int i = lo; i <= hi; ++i) {
      const double w = lanczos_window((i - center) / factor, lobes);
      folded[reflect_index(i, n_in)] += w;
      sum += w;
    }
    int first = 0;
    while (first < n_in && folded[first] == 0.0) ++first;
    int last = n_in - 1;
    while (last > first && folded[last] == 0.0) --last;
    auto& taps = k.rows[o];
    taps.start = first;
    taps.w.assign(folded.begin() + first, folded.begin() + last + 1);
    for (double& w : taps.w) w /= sum;
  }
  return k;
}

Image lanczos_downsample(const Image& img, int factor, int lobes) {
  check_factor(factor);
  if (img.height % factor != 0 || img.width % factor != 0)
    throw InvalidArgument("lanczos_downsample: dimensions not divisible by factor");
  const LanczosKernel kw = LanczosKernel::build(img.width, factor, lobes);
  const LanczosKernel kh = LanczosKernel::build(img.height, factor, lobes);
  Image tmp(img.channels, img.height, img.width / factor);
  apply_rows(img, tmp, kw);
  Image out(img.channels, img.height / factor, img.width / factor);
  apply_cols(tmp, out, kh);
  return out;
}

Image lanczos_downsample_adjoint(const Image& grad, int factor, int lobes) {
  check_factor(factor);
  const int full_h = grad.height * factor;
  const int full_w = grad.width * factor;
  const LanczosKernel kw = LanczosKernel::build(full_w, factor, lobes);
  const LanczosKernel kh = LanczosKernel::build(full_h, factor, lobes);
  Image tmp(grad.channels, full_h, grad.width);
  scatter_cols(grad, tmp, kh);
  Image out(grad.channels, full_h, full_w);
  scatter_rows(tmp, out, kw);
  return out;
}

Image apply_mask(const Image& img, const Mask& m) {
  if (img.height != m.height || img.width != m.width)
    throw InvalidArgument("apply_mask: shape mismatch");
  Image out = img;
  Eigen::Map<const Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      mm(m.data.data(), m.height, m.width);
  for (int c = 0; c < img.channels; ++c) out.plane(c) *= mm;
  return out;
}

}  // namespace dipstop
