#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"

#include "dipstop/error.hpp"
#include "dipstop/harness.hpp"
#include "dipstop/image_io.hpp"
#include "dipstop/monitor.hpp"
#include "dipstop/noise.hpp"
#include "dipstop/resample.hpp"
#include "dipstop/rng.hpp"

namespace {

using namespace dipstop;

int cmd_run(const std::string& config_path,
            const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  if (!config_path.empty()) cfg = load_config_file(config_path);
  for (const auto& [key, value] : overrides) set_config_key(cfg, key, value);
  RunRecord rec = run(cfg);
  std::printf("stopped at i* = %d (curvature %.6g) after %d iterations\n",
              rec.stop_iteration, rec.stop_curvature, rec.iterations);
  if (!rec.psnr_track.empty()) {
    std::printf("psnr at i* = %.2f dB, max over run = %.2f dB, accuracy = %.4f\n",
                rec.psnr_at_stop, rec.max_psnr, accuracy(rec));
  } else {
    std::printf("accuracy = n/a (no ground truth)\n");
  }
  std::printf("wrote %s/restored.png, run.csv%s, summary.json\n", cfg.out.c_str(),
              rec.curvature.size() >= 2 ? ", run.svg" : "");
  return 0;
}

int cmd_simulate(const SynthSpec& spec, const MonitorConfig& mc,
                 const std::string& csv_path) {
  const std::vector<double> e = synth_curve(spec);
  Monitor mon(mc);
  int n = 0;
  for (int i = 1; i <= static_cast<int>(e.size()); ++i) {
    n = i;
    if (mon.ingest_value(i, e[i - 1]).stop) break;
  }
  const auto sel = mon.finalize();
  std::printf("i* = %d (curvature %.6g) after %d of %zu values\n", sel.best_iteration,
              sel.best_curvature, n, e.size());
  if (!csv_path.empty()) {
    std::ofstream f(csv_path);
    if (!f) throw IoError("cannot open " + csv_path + " for writing");
    f << "iter,e,curvature\n";
    const auto& curv = mon.curvature_series();
    const int hh = mc.curvature_half_window + mc.mean_half_window;
    char buf[40];
    for (int i = 1; i <= n; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", e[i - 1]);
      f << i << ',' << buf << ',';
      const long long k = static_cast<long long>(i) - 2 * hh - 1;
      if (k >= 0 && k < static_cast<long long>(curv.size())) {
        std::snprintf(buf, sizeof(buf), "%.17g", curv[static_cast<size_t>(k)]);
        f << buf;
      }
      f << "\n";
    }
    std::printf("wrote %s\n", csv_path.c_str());
  }
  return 0;
}

int cmd_make_sample(int height, int width, std::uint64_t seed, const std::string& out) {
  save_image(make_test_scene(height, width, seed), out);
  std::printf("wrote %s (%dx%d)\n", out.c_str(), width, height);
  return 0;
}

int cmd_degrade(const std::string& kind, const std::string& input, double sigma,
                double frac, int factor, std::uint64_t seed, const std::string& out,
                const std::string& mask_out) {
  Image gt = load_image(input);
  if (kind == "noise") {
    PseudoNoise n = gen_gaussian_pn(gt.channels, gt.height, gt.width, sigma, seed);
    Image x0 = gt;
    x0.data = (gt.data + n.values.data).min(1.0).max(0.0);
    save_image(x0, out);
    std::printf("wrote %s (gaussian sigma=%g)\n", out.c_str(), sigma);
  } else if (kind == "mask") {
    if (!(frac > 0.0 && frac < 1.0))
      throw ConfigError("degrade: --frac must be in (0,1)");
    if (mask_out.empty()) throw ConfigError("degrade mask needs --mask-out");
    Mask m(gt.height, gt.width);
    Rng rng(seed);
    for (Eigen::Index i = 0; i < m.data.size(); ++i)
      m.data[i] = rng.uniform01() > frac ? 1.0 : 0.0;
    m.validate();
    save_image(apply_mask(gt, m), out);
    save_mask(m, mask_out);
    std::printf("wrote %s and %s (%.0f%% of pixels dropped)\n", out.c_str(),
                mask_out.c_str(), 100.0 * frac);
  } else if (kind == "downsample") {
    save_image(lanczos_downsample(gt, factor), out);
    std::printf("wrote %s (1/%d scale)\n", out.c_str(), factor);
  } else {
    throw ConfigError("degrade: --kind must be noise|mask|downsample");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"single-image restoration that stops itself: fits a small "
               "convolutional generator to one corrupted image and selects the "
               "iterate where the tracked pseudo-noise component bends hardest"};
  app.require_subcommand(1);
  // --h is a pinned experiment flag, so help is long-form only.
  app.set_help_flag("--help", "print help");

  // run
  auto* c_run = app.add_subcommand("run", "restore one image end to end");
  c_run->set_help_flag("--help", "print help");
  std::string config_path;
  c_run->add_option("--config", config_path, "flat key=value config file");
  static constexpr std::array<std::pair<const char*, const char*>, 12> kRunFlags{{
      {"--task", "task"},
      {"--input", "input"},
      {"--mask", "mask"},
      {"--factor", "factor"},
      {"--gt", "gt"},
      {"--sigma", "sigma"},
      {"--H", "H"},
      {"--h", "h"},
      {"--patience", "patience"},
      {"--max-iters", "max_iters"},
      {"--seed", "seed"},
      {"--out", "out"},
  }};
  std::array<std::string, kRunFlags.size()> run_vals;
  std::array<CLI::Option*, kRunFlags.size()> run_opts;
  for (size_t i = 0; i < kRunFlags.size(); ++i) {
    run_opts[i] = c_run->add_option(kRunFlags[i].first, run_vals[i],
                                    std::string("override config key ") +
                                        kRunFlags[i].second);
  }

  // simulate
  auto* c_sim = app.add_subcommand(
      "simulate", "feed a synthetic e-series through the stopping monitor");
  c_sim->set_help_flag("--help", "print help");
  std::string sim_kind = "sigmoid", sim_knots, sim_csv;
  SynthSpec spec;
  spec.length = 1000;
  spec.center = 500;
  spec.width = 60;
  MonitorConfig sim_mc;
  c_sim->add_option("--kind", sim_kind, "sigmoid|linear|piecewise");
  c_sim->add_option("--length", spec.length, "series length");
  c_sim->add_option("--noise", spec.noise_sigma, "gaussian noise sigma");
  c_sim->add_option("--seed", spec.seed, "noise seed");
  c_sim->add_option("--low", spec.low, "low level / linear intercept");
  c_sim->add_option("--high", spec.high, "high level");
  c_sim->add_option("--center", spec.center, "sigmoid inflection iteration");
  c_sim->add_option("--width", spec.width, "sigmoid width");
  c_sim->add_option("--slope", spec.slope, "linear slope per iteration");
  c_sim->add_option("--knots", sim_knots, "piecewise knots iter:value,iter:value,...");
  c_sim->add_option("--H", sim_mc.curvature_half_window, "curvature half window");
  c_sim->add_option("--h", sim_mc.mean_half_window, "anchor mean half window");
  c_sim->add_option("--e-ref", sim_mc.e_ref, "curvature normalization scale");
  c_sim->add_option("--patience", sim_mc.patience, "stop after this many non-improving iterations (0 = off)");
  c_sim->add_option("--out", sim_csv, "CSV path (optional)");

  // make-sample
  auto* c_mk = app.add_subcommand("make-sample",
                                  "write a procedural test scene as a PNG");
  int mk_size = 64;
  std::uint64_t mk_seed = 7;
  std::string mk_out = "scene.png";
  c_mk->add_option("--size", mk_size, "square size in pixels");
  c_mk->add_option("--seed", mk_seed, "scene seed");
  c_mk->add_option("--out", mk_out, "output PNG path");

  // degrade
  auto* c_dg = app.add_subcommand("degrade", "corrupt an image for experiments");
  std::string dg_kind = "noise", dg_in, dg_out = "degraded.png", dg_mask_out;
  double dg_sigma = 25.0 / 255.0, dg_frac = 0.3;
  int dg_factor = 4;
  std::uint64_t dg_seed = 0;
  c_dg->add_option("--kind", dg_kind, "noise|mask|downsample");
  c_dg->add_option("--input", dg_in, "clean input PNG")->required();
  c_dg->add_option("--sigma", dg_sigma, "noise: gaussian sigma");
  c_dg->add_option("--frac", dg_frac, "mask: fraction of pixels dropped");
  c_dg->add_option("--factor", dg_factor, "downsample: 4 or 8");
  c_dg->add_option("--seed", dg_seed, "corruption seed");
  c_dg->add_option("--out", dg_out, "corrupted output PNG");
  c_dg->add_option("--mask-out", dg_mask_out, "mask: where to write the mask PNG");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (c_run->parsed()) {
      std::vector<std::pair<std::string, std::string>> overrides;
      for (size_t i = 0; i < kRunFlags.size(); ++i) {
        if (run_opts[i]->count() > 0)
          overrides.emplace_back(kRunFlags[i].second, run_vals[i]);
      }
      return cmd_run(config_path, overrides);
    }
    if (c_sim->parsed()) {
      if (sim_kind == "sigmoid") spec.kind = SynthSpec::Kind::kSigmoid;
      else if (sim_kind == "linear") spec.kind = SynthSpec::Kind::kLinear;
      else if (sim_kind == "piecewise") spec.kind = SynthSpec::Kind::kPiecewise;
      else throw ConfigError("simulate: --kind must be sigmoid|linear|piecewise");
      if (!sim_knots.empty()) {
        std::stringstream ss(sim_knots);
        std::string item;
        while (std::getline(ss, item, ',')) {
          const auto colon = item.find(':');
          if (colon == std::string::npos)
            throw ConfigError("simulate: knots must look like iter:value");
          spec.knots.emplace_back(std::stod(item.substr(0, colon)),
                                  std::stod(item.substr(colon + 1)));
        }
      }
      return cmd_simulate(spec, sim_mc, sim_csv);
    }
    if (c_mk->parsed()) return cmd_make_sample(mk_size, mk_size, mk_seed, mk_out);
    if (c_dg->parsed())
      return cmd_degrade(dg_kind, dg_in, dg_sigma, dg_frac, dg_factor, dg_seed,
                         dg_out, dg_mask_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
