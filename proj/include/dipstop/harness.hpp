#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dipstop/image.hpp"
#include "dipstop/monitor.hpp"
#include "dipstop/net.hpp"
#include "dipstop/task.hpp"

namespace dipstop {

// Everything one experiment needs. Defaults follow the reference setup
// (H=200, h=20, sigma=1/25, lr=0.01); a flat key=value config file and CLI
// flags override them. The single seed drives the pseudo-noise, the network
// initialization and the jitter stream through distinct sub-streams.
struct RunConfig {
  TaskKind task = TaskKind::kDenoise;
  std::string input;  // corrupted observation (low-resolution one for sr)
  std::string mask;   // inpaint: mask PNG, white = known
  int factor = 4;     // sr upscaling factor
  std::string gt;     // optional ground truth at the restored size
  double sigma = 1.0 / 25.0;  // gaussian pseudo-noise scale
  MonitorConfig monitor;      // e_ref is computed from the pseudo-noise at run time
  NetConfig net;              // net.seed is overwritten with `seed`
  double lr = 0.01;
  int max_iters = 1500;
  std::uint64_t seed = 0;
  std::string out = ".";

  void validate() const;
};

// One finished experiment: the per-iteration tracks, the selection and the
// restored image. curvature[k] belongs to iteration k + H + h + 1; it became
// computable when iteration k + 2(H+h) + 1 arrived.
struct RunRecord {
  RunConfig config;
  std::vector<double> loss;
  std::vector<double> e;
  std::vector<double> curvature;
  std::vector<double> psnr_track;  // empty when no ground truth was given
  int iterations = 0;
  int stop_iteration = 0;  // i*, 1-based
  double stop_curvature = 0.0;
  double e_ref = 0.0;
  double psnr_at_stop = std::numeric_limits<double>::quiet_NaN();
  double max_psnr = std::numeric_limits<double>::quiet_NaN();
  double wall_seconds = 0.0;
  Image restored;
};

// Runs the whole pipeline: load, generate pseudo-noise, train with the
// stopping monitor, select i*, and write restored.png, run.csv, run.svg and
// summary.json into cfg.out. Deterministic given the config.
RunRecord run(const RunConfig& cfg);

// psnr(x_{i*}) / max_i psnr(x_i), in (0, 1]. Throws when the record has no
// PSNR track (no ground truth).
double accuracy(const RunRecord& rec);

// CSV with header iter,loss,e,curvature[,psnr]; the psnr column appears only
// when the record has a PSNR track. The curvature cell of row i holds the
// value that became computable at i (the one centered at i - H - h) and is
// blank for the first 2(H+h) rows and after the last computed one. Values
// carry round-trip precision.
void emit_csv(const RunRecord& rec, const std::string& path);

// SVG plot of the min-max-normalized e, curvature and optional PSNR curves
// with a vertical marker at i*. Needs at least two curvature values.
void emit_plot(const RunRecord& rec, const std::string& path);

// Synthetic e-series for exercising the monitor without training.
struct SynthSpec {
  enum class Kind { kSigmoid, kLinear, kPiecewise };
  Kind kind = Kind::kSigmoid;
  int length = 0;          // must be >= 2(H+h)+1 for a monitor run
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  // sigmoid: low + (high-low) / (1 + exp(-(i-center)/width)); inflection at
  // `center`
  double low = 0.0;
  double high = 1.0;
  double center = 0.0;
  double width = 1.0;
  // linear: low + slope*(i-1)
  double slope = 0.0;
  // piecewise: linear interpolation through (iteration, value) knots with
  // strictly increasing iterations, held flat outside the first/last knot
  std::vector<std::pair<double, double>> knots;
};

std::vector<double> synth_curve(const SynthSpec& spec);

// Procedural piecewise-smooth RGB scene (gradient sky, soft blobs, a hard
// disc, a horizon step, mild band-limited texture) for demos and experiments
// that need a ground truth without shipping one.
Image make_test_scene(int height, int width, std::uint64_t seed);

// Flat key=value config file: one pair per line, '#' comments, blank lines
// ignored. Unknown keys are errors. Returns defaults overridden by the file.
RunConfig load_config_file(const std::string& path);

// Applies one key=value pair onto cfg; shared by the file parser and the CLI.
void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace dipstop
