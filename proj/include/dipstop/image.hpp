#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dipstop/error.hpp"

namespace dipstop {

// Planar channel-major raster: element (c, y, x) lives at (c*height + y)*width + x.
// Values are nominally in [0,1]; nothing clamps them except the save path, so
// gradients can flow through out-of-range intermediates during optimization.
template <typename Scalar>
struct ImageT {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap =
      Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstPlaneMap = Eigen::Map<
      const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  int channels = 0;
  int height = 0;
  int width = 0;
  Array data;

  ImageT() = default;
  ImageT(int c, int h, int w) : channels(c), height(h), width(w) {
    if (c <= 0 || h <= 0 || w <= 0)
      throw InvalidArgument("image dimensions must be positive");
    data = Array::Zero(static_cast<Eigen::Index>(c) * h * w);
  }

  Eigen::Index size() const { return data.size(); }

  Eigen::Index index(int c, int y, int x) const {
    return (static_cast<Eigen::Index>(c) * height + y) * width + x;
  }

  Scalar& operator()(int c, int y, int x) { return data[index(c, y, x)]; }
  Scalar operator()(int c, int y, int x) const { return data[index(c, y, x)]; }

  bool same_shape(const ImageT& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  PlaneMap plane(int c) {
    return PlaneMap(data.data() + index(c, 0, 0), height, width);
  }
  ConstPlaneMap plane(int c) const {
    return ConstPlaneMap(data.data() + index(c, 0, 0), height, width);
  }

  bool all_finite() const { return data.isFinite().all(); }
};

using Image = ImageT<double>;

// Binary spatial mask, broadcast across channels. Elements are exactly 0 or 1
// and at least one element is 1.
struct Mask {
  int height = 0;
  int width = 0;
  Eigen::ArrayXd data;  // row-major, y*width + x

  Mask() = default;
  Mask(int h, int w) : height(h), width(w) {
    if (h <= 0 || w <= 0) throw InvalidArgument("mask dimensions must be positive");
    data = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(h) * w);
  }

  double& operator()(int y, int x) { return data[static_cast<Eigen::Index>(y) * width + x]; }
  double operator()(int y, int x) const {
    return data[static_cast<Eigen::Index>(y) * width + x];
  }

  Eigen::Index ones_count() const {
    return (data == 1.0).count();
  }

  // Enforces the binary invariant; call after filling by hand or from a file.
  void validate() const {
    if ((data != 0.0 && data != 1.0).any())
      throw InvalidArgument("mask elements must be exactly 0 or 1");
    if (ones_count() == 0) throw InvalidArgument("mask must have at least one known pixel");
  }
};

// Documented sentinel for a zero-MSE pair; plain doubles stay far below it.
inline constexpr double kPsnrPerfect = 300.0;
inline constexpr double kPsnrMseFloor = 1e-30;

// 10*log10(peak^2 / MSE) over all channels and pixels. Symmetric in its
// arguments bit-for-bit. Returns kPsnrPerfect once MSE falls to the floor.
template <typename Scalar>
double psnr(const ImageT<Scalar>& a, const ImageT<Scalar>& b, double peak = 1.0) {
  if (!a.same_shape(b)) throw InvalidArgument("psnr: shape mismatch");
  const double mse = (a.data - b.data).square().mean();
  if (mse <= kPsnrMseFloor) return kPsnrPerfect;
  return 10.0 * std::log10(peak * peak / mse);
}

// Affine map of a series onto [0,1]: min -> 0, max -> 1. A constant series
// maps to all zeros. Needs at least two samples.
inline std::vector<double> minmax_normalize(std::span<const double> series) {
  if (series.size() < 2)
    throw InvalidArgument("minmax_normalize: need at least two samples");
  const auto [lo_it, hi_it] = std::minmax_element(series.begin(), series.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> out(series.size());
  if (hi == lo) {
    std::fill(out.begin(), out.end(), 0.0);
    return out;
  }
  // Divide rather than multiply by a reciprocal: x/x == 1 exactly, so the
  // maximum really maps to 1 and nothing rounds past it.
  for (size_t i = 0; i < series.size(); ++i) out[i] = (series[i] - lo) / (hi - lo);
  return out;
}

}  // namespace dipstop
