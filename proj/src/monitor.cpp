#include "dipstop/monitor.hpp"

#include <cmath>

namespace dipstop {

namespace {

// Mean of series[lo..hi] inclusive, summed in index order.
double window_mean(std::span<const double> s, int lo, int hi) {
  double acc = 0.0;
  for (int k = lo; k <= hi; ++k) acc += s[static_cast<size_t>(k)];
  return acc / static_cast<double>(hi - lo + 1);
}

}  // namespace

double compute_e(const Image& x, const PseudoNoise& pn) {
  if (!x.same_shape(pn.values)) throw InvalidArgument("compute_e: shape mismatch");
  const double* xv = x.data.data();
  const double* nv = pn.values.data.data();
  const Eigen::Index n = x.size();
  double acc = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) acc += xv[j] * nv[j];
  return acc / static_cast<double>(n);
}

double compute_e_masked(const Image& x, const PseudoNoise& pn, const Mask& m) {
  if (!x.same_shape(pn.values)) throw InvalidArgument("compute_e_masked: shape mismatch");
  if (x.height != m.height || x.width != m.width)
    throw InvalidArgument("compute_e_masked: mask shape mismatch");
  const Eigen::Index spatial_ones = m.ones_count();
  if (spatial_ones == 0) throw InvalidArgument("compute_e_masked: all-zero mask");
  const Eigen::Index plane = static_cast<Eigen::Index>(x.height) * x.width;
  double acc = 0.0;
  for (int c = 0; c < x.channels; ++c) {
    const double* xv = x.data.data() + c * plane;
    const double* nv = pn.values.data.data() + c * plane;
    for (Eigen::Index j = 0; j < plane; ++j) acc += xv[j] * nv[j] * m.data[j];
  }
  return acc / static_cast<double>(spatial_ones * x.channels);
}

double curvature_at(std::span<const double> e_series, int j, const MonitorConfig& cfg) {
  cfg.validate();
  const int H = cfg.curvature_half_window;
  const int h = cfg.mean_half_window;
  if (j - H - h < 0 || j + H + h >= static_cast<int>(e_series.size()))
    throw InvalidArgument("curvature_at: insufficient history around index");

  const double y1 = window_mean(e_series, j - H - h, j - H + h);
  const double y2 = window_mean(e_series, j - h, j + h);
  const double y3 = window_mean(e_series, j + H - h, j + H + h);

  // Chord frame: origin at anchor 2 = (0, 0) after pre-scaling, x-axis along
  // the anchor-1 -> anchor-3 chord. u spans [-1, 1] by construction, so the
  // chord is never degenerate.
  const double v1 = (y1 - y2) / cfg.e_ref;
  const double v3 = (y3 - y2) / cfg.e_ref;
  const double phi = std::atan2(v3 - v1, 2.0);
  const double cp = std::cos(phi);
  const double sp = std::sin(phi);

  // Quadratic least squares over the rotated points, normal equations
  // accumulated in index order and solved by Cramer's rule.
  double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
  double t0 = 0, t1 = 0, t2 = 0;
  const int n = 2 * H + 1;
  for (int idx = j - H; idx <= j + H; ++idx) {
    const double u = static_cast<double>(idx - j) / H;
    const double v = (e_series[static_cast<size_t>(idx)] - y2) / cfg.e_ref;
    const double ur = u * cp + v * sp;
    const double vr = -u * sp + v * cp;
    const double ur2 = ur * ur;
    s1 += ur;
    s2 += ur2;
    s3 += ur2 * ur;
    s4 += ur2 * ur2;
    t0 += vr;
    t1 += ur * vr;
    t2 += ur2 * vr;
  }
  const double n_ = static_cast<double>(n);
  const double det = s4 * (s2 * n_ - s1 * s1) - s3 * (s3 * n_ - s1 * s2) +
                     s2 * (s3 * s1 - s2 * s2);
  const double det_a = t2 * (s2 * n_ - s1 * s1) - s3 * (t1 * n_ - t0 * s1) +
                       s2 * (t1 * s1 - t0 * s2);
  return det_a / det;
}

Monitor::Monitor(const MonitorConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

Monitor::IngestResult Monitor::ingest(int iteration, const Image& x, double e) {
  return advance(iteration, &x, e);
}

Monitor::IngestResult Monitor::ingest_value(int iteration, double e) {
  return advance(iteration, nullptr, e);
}

Monitor::IngestResult Monitor::advance(int iteration, const Image* x, double e) {
  if (iteration != count_ + 1)
    throw InvalidArgument("monitor: iterations must be ingested in order (expected " +
                          std::to_string(count_ + 1) + ", got " +
                          std::to_string(iteration) + ")");
  count_ = iteration;
  e_series_.push_back(e);

  const int H = cfg_.curvature_half_window;
  const int h = cfg_.mean_half_window;
  const size_t ring_cap = static_cast<size_t>(H + h + 1);
  if (x != nullptr) {
    ring_.push_back(*x);
    if (ring_.size() > ring_cap) ring_.pop_front();
  }

  IngestResult res;
  if (count_ >= 2 * (H + h) + 1) {
    const int j_iter = count_ - H - h;              // 1-based iteration index
    const double c = curvature_at(e_series_, j_iter - 1, cfg_);
    curvatures_.push_back(c);
    res.curvature = c;
    if (!has_best_ || c > best_curvature_) {
      has_best_ = true;
      best_curvature_ = c;
      best_iter_ = j_iter;
      best_emitted_at_ = count_;
      // With the ring capped at H+h+1, iterate j is exactly the oldest entry.
      if (x != nullptr) best_image_ = ring_.front();
    }
  }
  if (cfg_.patience > 0 && has_best_ && count_ - best_emitted_at_ >= cfg_.patience)
    res.stop = true;
  return res;
}

Monitor::Selection Monitor::finalize() const {
  if (!has_best_)
    throw InvalidArgument("monitor: run too short for any curvature (need >= 2(H+h)+1 iterations)");
  Selection sel;
  sel.best_iteration = best_iter_;
  sel.best_curvature = best_curvature_;
  sel.best_image = best_image_;
  return sel;
}

}  // namespace dipstop
