#include "dipstop/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "dipstop/error.hpp"
#include "dipstop/image_io.hpp"
#include "dipstop/noise.hpp"

namespace dipstop {

namespace {

// Enough digits that a parse of the CSV reproduces the exact double.
std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

long long parse_int(const std::string& key, const std::string& value) {
  size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  }
  if (used != value.size())
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
  return v;
}

double parse_real(const std::string& key, const std::string& value) {
  size_t used = 0;
  double v = 0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
  if (used != value.size())
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ConfigError(key + ": expected 0/1/true/false, got '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(static_cast<int>(parse_int(key, item)));
  }
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list");
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const char* task_name(TaskKind k) {
  switch (k) {
    case TaskKind::kDenoise: return "denoise";
    case TaskKind::kSuperResolve: return "sr";
    case TaskKind::kInpaint: return "inpaint";
  }
  return "?";
}

void write_summary(const RunRecord& rec, const std::string& path) {
  nlohmann::json j;
  const RunConfig& c = rec.config;
  j["task"] = task_name(c.task);
  j["input"] = c.input;
  if (!c.mask.empty()) j["mask"] = c.mask;
  if (!c.gt.empty()) j["gt"] = c.gt;
  if (c.task == TaskKind::kSuperResolve) j["factor"] = c.factor;
  j["sigma"] = c.sigma;
  j["seed"] = c.seed;
  j["lr"] = c.lr;
  j["max_iters"] = c.max_iters;
  j["H"] = c.monitor.curvature_half_window;
  j["h"] = c.monitor.mean_half_window;
  j["patience"] = c.monitor.patience;
  j["e_ref"] = rec.e_ref;
  j["iterations"] = rec.iterations;
  j["stop_iteration"] = rec.stop_iteration;
  j["stop_curvature"] = rec.stop_curvature;
  if (!rec.psnr_track.empty()) {
    j["psnr_at_stop"] = rec.psnr_at_stop;
    j["max_psnr"] = rec.max_psnr;
    j["accuracy"] = accuracy(rec);
  } else {
    j["accuracy"] = "n/a";
  }
  j["wall_seconds"] = rec.wall_seconds;
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << j.dump(2) << "\n";
  if (!f) throw IoError("write failed for " + path);
}

}  // namespace

void RunConfig::validate() const {
  if (input.empty()) throw ConfigError("input image path is required");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be > 0");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (task == TaskKind::kSuperResolve && factor != 4 && factor != 8)
    throw ConfigError("factor must be 4 or 8");
  if (task == TaskKind::kInpaint && mask.empty())
    throw ConfigError("inpaint needs a mask path");
  monitor.validate();
  net.validate();
  const int hh = monitor.curvature_half_window + monitor.mean_half_window;
  if (max_iters < 2 * hh + 1) {
    throw ConfigError("max_iters must be at least 2(H+h)+1 = " +
                      std::to_string(2 * hh + 1));
  }
  if (out.empty()) throw ConfigError("output directory is required");
}

RunRecord run(const RunConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();

  Image x0 = load_image(cfg.input);
  int rh = x0.height, rw = x0.width;
  const int rc = x0.channels;
  TaskSpec task;
  switch (cfg.task) {
    case TaskKind::kDenoise: {
      PseudoNoise pn = gen_gaussian_pn(rc, rh, rw, cfg.sigma, cfg.seed);
      task = make_denoise_task(x0, pn);
      break;
    }
    case TaskKind::kSuperResolve: {
      rh *= cfg.factor;
      rw *= cfg.factor;
      PseudoNoise pn = gen_gaussian_pn(rc, rh, rw, cfg.sigma, cfg.seed);
      task = make_sr_task(x0, cfg.factor, pn);
      break;
    }
    case TaskKind::kInpaint: {
      Mask m = load_mask(cfg.mask);
      PseudoNoise pn = gen_sinusoid_pn(rc, rh, rw, cfg.seed);
      task = make_inpaint_task(x0, m, pn);
      break;
    }
  }

  std::optional<Image> gt;
  if (!cfg.gt.empty()) {
    gt = load_image(cfg.gt);
    if (gt->channels != rc || gt->height != rh || gt->width != rw)
      throw ConfigError("ground truth must match the restored image shape");
  }

  NetConfig nc = cfg.net;
  nc.seed = cfg.seed;
  TrainState state = net_init(nc, rc, rh, rw);

  MonitorConfig mc = cfg.monitor;
  mc.e_ref = e_ref_of(task.pn);
  Monitor mon(mc);

  RunRecord rec;
  rec.config = cfg;
  rec.e_ref = mc.e_ref;
  for (int i = 1; i <= cfg.max_iters; ++i) {
    try {
      StepResult sr = backward_step(state, task, cfg.lr);
      const double ei = e_measure(sr.image, task);
      rec.loss.push_back(sr.loss);
      rec.e.push_back(ei);
      if (gt) rec.psnr_track.push_back(psnr(sr.image, *gt));
      if (mon.ingest(i, sr.image, ei).stop) break;
    } catch (const DivergenceError&) {
      throw;  // already carries the step index
    } catch (const std::exception& ex) {
      throw std::runtime_error("iteration " + std::to_string(i) + ": " + ex.what());
    }
  }

  rec.iterations = mon.iterations();
  rec.curvature = mon.curvature_series();
  const Monitor::Selection sel = mon.finalize();
  rec.stop_iteration = sel.best_iteration;
  rec.stop_curvature = sel.best_curvature;
  rec.restored = sel.best_image;
  if (gt) {
    rec.psnr_at_stop = rec.psnr_track[rec.stop_iteration - 1];
    rec.max_psnr = *std::max_element(rec.psnr_track.begin(), rec.psnr_track.end());
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.out);
  save_image(rec.restored, cfg.out + "/restored.png");
  emit_csv(rec, cfg.out + "/run.csv");
  if (rec.curvature.size() >= 2) emit_plot(rec, cfg.out + "/run.svg");
  write_summary(rec, cfg.out + "/summary.json");
  return rec;
}

double accuracy(const RunRecord& rec) {
  if (rec.psnr_track.empty())
    throw InvalidArgument("accuracy: the run has no PSNR track (no ground truth)");
  return rec.psnr_at_stop / rec.max_psnr;
}

void emit_csv(const RunRecord& rec, const std::string& path) {
  const bool with_psnr = !rec.psnr_track.empty();
  const int hh = rec.config.monitor.curvature_half_window +
                 rec.config.monitor.mean_half_window;
  std::ofstream f(path);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << (with_psnr ? "iter,loss,e,curvature,psnr" : "iter,loss,e,curvature") << "\n";
  for (int i = 1; i <= rec.iterations; ++i) {
    f << i << ',' << fmt_g17(rec.loss[i - 1]) << ',' << fmt_g17(rec.e[i - 1]) << ',';
    const long long k = static_cast<long long>(i) - 2 * hh - 1;
    if (k >= 0 && k < static_cast<long long>(rec.curvature.size()))
      f << fmt_g17(rec.curvature[static_cast<size_t>(k)]);
    if (with_psnr) f << ',' << fmt_g17(rec.psnr_track[i - 1]);
    f << "\n";
  }
  if (!f) throw IoError("write failed for " + path);
}

std::vector<double> synth_curve(const SynthSpec& spec) {
  if (spec.length < 1) throw InvalidArgument("synth_curve: length must be >= 1");
  if (!(spec.noise_sigma >= 0.0))
    throw InvalidArgument("synth_curve: noise_sigma must be >= 0");
  std::vector<double> out(static_cast<size_t>(spec.length));
  switch (spec.kind) {
    case SynthSpec::Kind::kSigmoid: {
      if (!(spec.width > 0.0)) throw InvalidArgument("synth_curve: width must be > 0");
      for (int i = 1; i <= spec.length; ++i) {
        const double t = (static_cast<double>(i) - spec.center) / spec.width;
        out[i - 1] = spec.low + (spec.high - spec.low) / (1.0 + std::exp(-t));
      }
      break;
    }
    case SynthSpec::Kind::kLinear: {
      for (int i = 1; i <= spec.length; ++i)
        out[i - 1] = spec.low + spec.slope * (i - 1);
      break;
    }
    case SynthSpec::Kind::kPiecewise: {
      if (spec.knots.size() < 2)
        throw InvalidArgument("synth_curve: piecewise needs at least two knots");
      for (size_t k = 1; k < spec.knots.size(); ++k) {
        if (!(spec.knots[k].first > spec.knots[k - 1].first))
          throw InvalidArgument("synth_curve: knot iterations must strictly increase");
      }
      for (int i = 1; i <= spec.length; ++i) {
        const double x = i;
        double v;
        if (x <= spec.knots.front().first) {
          v = spec.knots.front().second;
        } else if (x >= spec.knots.back().first) {
          v = spec.knots.back().second;
        } else {
          size_t k = 1;
          while (spec.knots[k].first < x) ++k;
          const auto& [x0, y0] = spec.knots[k - 1];
          const auto& [x1, y1] = spec.knots[k];
          v = y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
        out[i - 1] = v;
      }
      break;
    }
  }
  if (spec.noise_sigma > 0.0) {
    Rng rng(spec.seed);
    for (double& v : out) v += rng.normal(0.0, spec.noise_sigma);
  }
  return out;
}

Image make_test_scene(int height, int width, std::uint64_t seed) {
  if (height < 2 || width < 2)
    throw InvalidArgument("make_test_scene: size must be at least 2x2");
  Rng rng(seed);
  Image img(3, height, width);
  const double base[3] = {0.55, 0.65, 0.8};
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < height; ++y) {
      const double v = base[c] * (1.0 - 0.5 * y / height);
      for (int x = 0; x < width; ++x) img(c, y, x) = v;
    }
  }
  // soft blobs
  for (int blob = 0; blob < 6; ++blob) {
    const double cy = rng.uniform(0.1, 0.9);
    const double cx = rng.uniform(0.1, 0.9);
    const double s = rng.uniform(0.05, 0.25);
    double amp[3];
    for (double& a : amp) a = rng.uniform(-0.4, 0.4);
    const double inv = 1.0 / (2.0 * s * s);
    for (int y = 0; y < height; ++y) {
      const double fy = static_cast<double>(y) / height;
      for (int x = 0; x < width; ++x) {
        const double fx = static_cast<double>(x) / width;
        const double g =
            std::exp(-((fy - cy) * (fy - cy) + (fx - cx) * (fx - cx)) * inv);
        for (int c = 0; c < 3; ++c) img(c, y, x) += amp[c] * g;
      }
    }
  }
  // hard-edged disc
  for (int y = 0; y < height; ++y) {
    const double fy = static_cast<double>(y) / height;
    for (int x = 0; x < width; ++x) {
      const double fx = static_cast<double>(x) / width;
      if ((fy - 0.6) * (fy - 0.6) + (fx - 0.35) * (fx - 0.35) < 0.04) {
        img(0, y, x) = 0.85;
        img(1, y, x) = 0.45;
        img(2, y, x) = 0.25;
      }
    }
  }
  // horizon step
  for (int c = 0; c < 3; ++c) {
    for (int y = (3 * height) / 4; y < height; ++y) {
      for (int x = 0; x < width; ++x) img(c, y, x) *= 0.6;
    }
  }
  // band-limited texture: white noise smoothed by a separable 9-tap raised
  // cosine, symmetric boundary
  Eigen::ArrayXd noise(static_cast<Eigen::Index>(height) * width);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise[i] = rng.normal();
  double kern[9];
  double ksum = 0.0;
  for (int i = 0; i < 9; ++i) {
    kern[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / 8.0);
    ksum += kern[i];
  }
  for (double& k : kern) k /= ksum;
  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -1 - i;
      if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
  };
  Eigen::ArrayXd tmp(noise.size()), tex(noise.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int t = 0; t < 9; ++t) acc += kern[t] * noise[y * width + reflect(x + t - 4, width)];
      tmp[y * width + x] = acc;
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int t = 0; t < 9; ++t) acc += kern[t] * tmp[reflect(y + t - 4, height) * width + x];
      tex[y * width + x] = acc;
    }
  }
  for (int c = 0; c < 3; ++c) img.plane(c) += 0.06 * Eigen::Map<const Eigen::Array<
      double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(tex.data(), height, width);
  img.data = img.data.min(1.0).max(0.0);
  return img;
}

void set_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "task") {
    if (value == "denoise") cfg.task = TaskKind::kDenoise;
    else if (value == "sr") cfg.task = TaskKind::kSuperResolve;
    else if (value == "inpaint") cfg.task = TaskKind::kInpaint;
    else throw ConfigError("task: expected denoise|sr|inpaint, got '" + value + "'");
  } else if (key == "input") {
    cfg.input = value;
  } else if (key == "mask") {
    cfg.mask = value;
  } else if (key == "factor") {
    cfg.factor = static_cast<int>(parse_int(key, value));
  } else if (key == "gt") {
    cfg.gt = value;
  } else if (key == "sigma") {
    cfg.sigma = parse_real(key, value);
  } else if (key == "H") {
    cfg.monitor.curvature_half_window = static_cast<int>(parse_int(key, value));
  } else if (key == "h") {
    cfg.monitor.mean_half_window = static_cast<int>(parse_int(key, value));
  } else if (key == "patience") {
    cfg.monitor.patience = static_cast<int>(parse_int(key, value));
  } else if (key == "max_iters") {
    cfg.max_iters = static_cast<int>(parse_int(key, value));
  } else if (key == "seed") {
    cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
  } else if (key == "out") {
    cfg.out = value;
  } else if (key == "lr") {
    cfg.lr = parse_real(key, value);
  } else if (key == "input_channels") {
    cfg.net.input_channels = static_cast<int>(parse_int(key, value));
  } else if (key == "depth") {
    cfg.net.depth = static_cast<int>(parse_int(key, value));
  } else if (key == "channels") {
    cfg.net.channels_per_level = parse_int_list(key, value);
  } else if (key == "skip_channels") {
    cfg.net.skip_channels = parse_int_list(key, value);
  } else if (key == "leaky_slope") {
    cfg.net.leaky_slope = parse_real(key, value);
  } else if (key == "upsample") {
    if (value == "nearest") cfg.net.upsample = NetConfig::Upsample::kNearest;
    else if (value == "bilinear") cfg.net.upsample = NetConfig::Upsample::kBilinear;
    else throw ConfigError("upsample: expected nearest|bilinear, got '" + value + "'");
  } else if (key == "channel_norm") {
    cfg.net.channel_norm = parse_bool(key, value);
  } else if (key == "z_scale") {
    cfg.net.z_scale = parse_real(key, value);
  } else if (key == "z_jitter") {
    cfg.net.z_jitter = parse_real(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    }
    try {
      set_config_key(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

}  // namespace dipstop
