#pragma once

#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "dipstop/image.hpp"
#include "dipstop/noise.hpp"

namespace dipstop {

struct MonitorConfig {
  int curvature_half_window = 200;  // H: half-length of the fitted e window
  int mean_half_window = 20;        // h: half-length of the anchor averaging windows
  double e_ref = 1.0;               // fixed e-axis scale for the chord frame
  int patience = 500;               // stop after this many iterations past the
                                    // best curvature; 0 disables early stop

  void validate() const {
    if (mean_half_window < 1 || curvature_half_window <= mean_half_window)
      throw InvalidArgument("monitor: need H > h >= 1");
    if (!(e_ref > 0.0)) throw InvalidArgument("monitor: e_ref must be positive");
    if (patience < 0) throw InvalidArgument("monitor: patience must be >= 0");
  }
};

// Mean elementwise product (1/N) sum x_j * pn_j, accumulated in planar index
// order so the value is reproducible bit-for-bit.
double compute_e(const Image& x, const PseudoNoise& pn);

// Masked variant (1/L) sum x_j * pn_j * m_j with the mask broadcast across
// channels; L counts mask ones times the channel count, making this a true
// mean over the summed elements. An all-ones mask reduces to compute_e.
double compute_e_masked(const Image& x, const PseudoNoise& pn, const Mask& m);

// Curvature of the e-series at 0-based position j, needing samples
// [j-H-h, j+H+h]. Construction: (1) anchor means y1, y2, y3 over the three
// (2h+1)-sample windows centered at j-H, j, j+H; (2) pre-scale each sample to
// u = (idx-j)/H, v = (e-y2)/e_ref; (3) rotate about the origin (anchor 2) so
// the anchor-1 -> anchor-3 chord becomes horizontal; (4) least-squares
// fit v' = a u'^2 + b u' + c over all points with idx in [j-H, j+H];
// (5) return a.
double curvature_at(std::span<const double> e_series, int j, const MonitorConfig& cfg);

// Streaming realization of the stopping rule: ingest iterates in order,
// measure e, emit the curvature at j = i - H - h once available, track the
// running argmax (strictly greater wins, so ties keep the earliest index),
// and raise a stop signal when the best has not improved for `patience`
// iterations. Iteration indices are 1-based throughout the public surface.
class Monitor {
 public:
  explicit Monitor(const MonitorConfig& cfg);

  struct IngestResult {
    std::optional<double> curvature;  // value for iteration i - H - h, if ready
    bool stop = false;
  };

  // Feed iterate i with the externally measured e_i; the task decides which
  // e-op applies, the monitor only sees the value. The image is snapshotted
  // into a bounded ring so the best iterate can be returned later.
  IngestResult ingest(int iteration, const Image& x, double e);

  // Same bookkeeping without images, for synthetic-curve runs; finalize will
  // then return an empty image.
  IngestResult ingest_value(int iteration, double e);

  struct Selection {
    int best_iteration = 0;  // i*, 1-based
    double best_curvature = 0.0;
    Image best_image;        // empty for value-only runs
  };

  // Global argmax over all computed curvatures, earliest index on ties.
  // Throws if the run was too short to compute any curvature.
  Selection finalize() const;

  int iterations() const { return count_; }
  const std::vector<double>& e_series() const { return e_series_; }
  // curvature_series()[k] is the curvature at iteration k + H + h + 1.
  const std::vector<double>& curvature_series() const { return curvatures_; }
  int first_curvature_iteration() const {
    return cfg_.curvature_half_window + cfg_.mean_half_window + 1;
  }
  size_t retained_images() const { return ring_.size() + (best_image_.size() > 0 ? 1 : 0); }
  const MonitorConfig& config() const { return cfg_; }

 private:
  IngestResult advance(int iteration, const Image* x, double e);

  MonitorConfig cfg_;
  int count_ = 0;
  std::vector<double> e_series_;
  std::vector<double> curvatures_;
  std::deque<Image> ring_;  // last H+h+1 iterates; front is the curvature index
  bool has_best_ = false;
  int best_iter_ = 0;
  double best_curvature_ = 0.0;
  Image best_image_;
  int best_emitted_at_ = 0;  // ingest iteration at which best last changed
};

}  // namespace dipstop
