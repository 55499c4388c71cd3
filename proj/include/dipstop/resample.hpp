#pragma once

#include <vector>

#include "dipstop/image.hpp"

namespace dipstop {

// Precomputed 1-D Lanczos filter for one axis of an integer downscale.
// Output sample k is centered at input coordinate (k + 0.5) * factor - 0.5
// (pixel-center alignment). Out-of-range taps are reflect-folded back into
// range, and each output position's weights are renormalized to sum to 1.
struct LanczosKernel {
  int lobes = 3;
  int factor = 0;
  struct Taps {
    int start = 0;               // first in-range input index
    std::vector<double> w;       // folded, renormalized weights
  };
  std::vector<Taps> rows;        // one per output sample

  static LanczosKernel build(int n_in, int factor, int lobes = 3);
};

// Separable Lanczos downscale, rows then columns, in a fixed summation order.
// factor must be 4 or 8 and must divide both image dimensions.
Image lanczos_downsample(const Image& img, int factor, int lobes = 3);

// Exact adjoint of lanczos_downsample: <d(x), y> == <x, adjoint(y)> for all
// x, y. grad has the downsampled shape; the result has shape * factor.
Image lanczos_downsample_adjoint(const Image& grad, int factor, int lobes = 3);

// out(a, b, c) = img(a, b, c) * m(b, c); the mask broadcasts over channels.
Image apply_mask(const Image& img, const Mask& m);

}  // namespace dipstop
