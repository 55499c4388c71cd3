#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <string>

#include "dipstop/harness.hpp"
#include "dipstop/net.hpp"
#include "dipstop/noise.hpp"
#include "dipstop/resample.hpp"
#include "dipstop/task.hpp"
#include "support/oracles.hpp"
#include "support/tmp.hpp"

using namespace dipstop;

namespace {

const std::string kTmp = testutil::scratch_dir("test_net");

// Two-level toy generator, small enough for exhaustive finite differences.
NetConfig tiny_config(bool norm = true) {
  NetConfig cfg;
  cfg.input_channels = 2;
  cfg.depth = 2;
  cfg.channels_per_level = {2, 3};
  cfg.skip_channels = {1, 1};
  cfg.channel_norm = norm;
  cfg.seed = 5;
  return cfg;
}

TaskSpec tiny_denoise(std::uint64_t seed) {
  const Image x0 = oracle::random_image(1, 8, 8, seed, 0.2, 0.8);
  return make_denoise_task(x0, gen_gaussian_pn(1, 8, 8, 1.0 / 25.0, seed + 1));
}

TaskSpec tiny_sr(std::uint64_t seed) {
  const Image x0 = oracle::random_image(1, 2, 2, seed, 0.2, 0.8);
  return make_sr_task(x0, 4, gen_gaussian_pn(1, 8, 8, 1.0 / 25.0, seed + 1));
}

TaskSpec tiny_inpaint(std::uint64_t seed) {
  const Image x0 = oracle::random_image(1, 8, 8, seed, 0.2, 0.8);
  Mask m(8, 8);
  Rng rng(seed + 2);
  for (Eigen::Index i = 0; i < m.data.size(); ++i)
    m.data[i] = rng.uniform01() < 0.3 ? 0.0 : 1.0;
  m(0, 0) = 1.0;
  return make_inpaint_task(x0, m, gen_sinusoid_pn(1, 8, 8, seed + 3));
}

double energy_at(TrainState& st, const TaskSpec& task) {
  return energy(forward(st), task);
}

// Exhaustive central-difference check of dE/dtheta for one state/task pair.
void check_full_gradient(TrainState& st, const TaskSpec& task, double tol) {
  TrainState probe = st;
  backward_step(probe, task, 0.0);  // lr 0: fills grads, leaves params alone
  REQUIRE((probe.params == st.params).all());

  double worst = 0.0;
  for (Eigen::Index i = 0; i < st.params.size(); ++i) {
    const double keep = st.params[i];
    // Small enough that the stencil does not straddle a leaky-ReLU kink for
    // these seeds (a bias step shifts a whole channel plane past zero).
    const double delta = 1e-6 * std::max(1.0, std::abs(keep));
    st.params[i] = keep + delta;
    const double ep = energy_at(st, task);
    st.params[i] = keep - delta;
    const double em = energy_at(st, task);
    st.params[i] = keep;
    const double fd = (ep - em) / (2.0 * delta);
    const double a = probe.grads[i];
    const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-5});
    worst = std::max(worst, rel);
  }
  CHECK(worst <= tol);
}

}  // namespace

TEST_CASE("parameter count matches a hand count of the topology") {
  NetConfig cfg;
  cfg.input_channels = 2;
  cfg.depth = 2;
  cfg.channels_per_level = {3, 4};
  cfg.skip_channels = {1, 2};
  // conv = cout*(cin*k*k + 1), affine norm = 2*cout, every non-head conv
  // carries a norm. Decoder level k sees up(next) + skip_k channels and emits
  // channels_per_level[max(k-1, 0)].
  const int enc_a0 = 3 * (2 * 9 + 1) + 6;
  const int enc_b0 = 3 * (3 * 9 + 1) + 6;
  const int skip0 = 1 * (2 * 1 + 1) + 2;
  const int enc_a1 = 4 * (3 * 9 + 1) + 8;
  const int enc_b1 = 4 * (4 * 9 + 1) + 8;
  const int skip1 = 2 * (3 * 1 + 1) + 4;
  const int dec_a1 = 3 * ((4 + 2) * 9 + 1) + 6;
  const int dec_b1 = 3 * (3 * 1 + 1) + 6;
  const int dec_a0 = 3 * ((3 + 1) * 9 + 1) + 6;
  const int dec_b0 = 3 * (3 * 1 + 1) + 6;
  const int head = 3 * (3 * 1 + 1);
  const int want = enc_a0 + enc_b0 + skip0 + enc_a1 + enc_b1 + skip1 + dec_a1 + dec_b1 +
                   dec_a0 + dec_b0 + head;
  CHECK(want == 782);

  const TrainState st = net_init(cfg, 3, 16, 16);
  CHECK(st.net.param_count() == want);
  CHECK(st.params.size() == want);

  // Norm off drops exactly the affine pairs (2 per non-head conv channel).
  cfg.channel_norm = false;
  const TrainState bare = net_init(cfg, 3, 16, 16);
  CHECK(bare.net.param_count() == want - (6 + 6 + 2 + 8 + 8 + 4 + 6 + 6 + 6 + 6));
}

TEST_CASE("identical seeds give identical initial reconstructions") {
  NetConfig cfg = tiny_config();
  TrainState a = net_init(cfg, 1, 8, 8);
  TrainState b = net_init(cfg, 1, 8, 8);
  CHECK((a.params == b.params).all());
  CHECK((a.z.data == b.z.data).all());
  CHECK((forward(a).data == forward(b).data).all());

  cfg.seed = 6;
  TrainState c = net_init(cfg, 1, 8, 8);
  CHECK((a.params != c.params).any());
  CHECK((forward(a).data != forward(c).data).any());
}

TEST_CASE("sizes must be multiples of 2^depth") {
  const NetConfig cfg;  // depth 3
  CHECK_THROWS_AS(net_init(cfg, 3, 65, 65), InvalidArgument);
  CHECK_THROWS_AS(net_init(cfg, 3, 64, 60), InvalidArgument);
  const TrainState ok = net_init(cfg, 3, 64, 64);
  CHECK(ok.z.height == 64);
}

TEST_CASE("zeroed parameters collapse the output to the head bias") {
  for (bool norm : {true, false}) {
    TrainState st = net_init(tiny_config(norm), 1, 8, 8);
    st.params.setZero();
    st.params.tail(1).setConstant(0.7);  // head bias is the last slot
    const Image out = forward(st);
    const double want = 1.0 / (1.0 + std::exp(-0.7));
    CHECK((out.data - want).abs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("doubling the head weights doubles the pre-activation") {
  NetConfig cfg = tiny_config();
  TrainState st = net_init(cfg, 1, 8, 8);
  const int ch0 = cfg.channels_per_level[0];
  const Eigen::Index head_pc = ch0 + 1;  // 1x1, one output channel
  st.params.tail(1).setZero();           // keep the bias out of the probe

  const Image x1 = forward(st);
  st.params.segment(st.params.size() - head_pc, ch0) *= 2.0;
  const Image x2 = forward(st);

  for (Eigen::Index i = 0; i < x1.size(); ++i) {
    const double l1 = std::log(x1.data[i] / (1.0 - x1.data[i]));
    const double l2 = std::log(x2.data[i] / (1.0 - x2.data[i]));
    CHECK(std::abs(l2 - 2.0 * l1) <= 1e-9 * std::max(1.0, std::abs(l1)));
  }
}

TEST_CASE("forward is pure and copies evolve independently") {
  TrainState st = net_init(tiny_config(), 1, 8, 8);
  const Image first = forward(st);
  const Image second = forward(st);
  CHECK((first.data == second.data).all());

  TrainState frozen = st;
  const TaskSpec task = tiny_denoise(40);
  backward_step(st, task, 0.01);
  CHECK((frozen.params != st.params).any());
  CHECK((forward(frozen).data == first.data).all());
}

TEST_CASE("upsampling modes follow their stencils and adjoints") {
  Image x(1, 2, 2);
  x(0, 0, 0) = 1.0;
  x(0, 0, 1) = 2.0;
  x(0, 1, 0) = 3.0;
  x(0, 1, 1) = 4.0;

  const detail::Upsample2x nearest(NetConfig::Upsample::kNearest, 2, 2);
  const Image n = nearest.forward(x);
  REQUIRE(n.height == 4);
  for (int yy = 0; yy < 4; ++yy)
    for (int xx = 0; xx < 4; ++xx) CHECK(n(0, yy, xx) == x(0, yy / 2, xx / 2));

  // Bilinear with half-pixel centers: a 1-D pair (a, b) expands to
  // (a, 0.75a + 0.25b, 0.25a + 0.75b, b) with clamped ends.
  const detail::Upsample2x bilinear(NetConfig::Upsample::kBilinear, 2, 2);
  const Image b = bilinear.forward(x);
  CHECK(b(0, 0, 0) == 1.0);
  CHECK(b(0, 0, 1) == doctest::Approx(0.75 * 1 + 0.25 * 2).epsilon(1e-15));
  CHECK(b(0, 0, 2) == doctest::Approx(0.25 * 1 + 0.75 * 2).epsilon(1e-15));
  CHECK(b(0, 0, 3) == 2.0);
  CHECK(b(0, 3, 0) == 3.0);
  CHECK(b(0, 1, 1) ==
        doctest::Approx(0.75 * (0.75 * 1 + 0.25 * 2) + 0.25 * (0.75 * 3 + 0.25 * 4))
            .epsilon(1e-15));

  for (const auto mode : {NetConfig::Upsample::kNearest, NetConfig::Upsample::kBilinear}) {
    const detail::Upsample2x up(mode, 4, 4);
    const Image xr = oracle::random_image(2, 4, 4, 71);
    const Image dy = oracle::random_image(2, 8, 8, 72);
    const double lhs = oracle::dot(up.forward(xr), dy);
    const double rhs = oracle::dot(xr, up.backward(dy));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("task energies hit their closed-form anchors") {
  const TaskSpec den = tiny_denoise(50);
  CHECK(energy(den.target, den) == 0.0);

  const TaskSpec inp = tiny_inpaint(51);
  Image x = inp.target;
  // Scribble over the unknown region only; the energy must not move at all.
  for (int y = 0; y < 8; ++y)
    for (int xx = 0; xx < 8; ++xx)
      if ((*inp.mask)(y, xx) == 0.0)
        for (int c = 0; c < x.channels; ++c) x(c, y, xx) += 10.0 * (y - xx);
  CHECK(energy(x, inp) == 0.0);

  const Image probe = oracle::random_image(1, 8, 8, 52);
  const double e1 = energy(probe, inp);
  Image probe2 = probe;
  for (int y = 0; y < 8; ++y)
    for (int xx = 0; xx < 8; ++xx)
      if ((*inp.mask)(y, xx) == 0.0) probe2(0, y, xx) -= 3.0;
  CHECK(energy(probe2, inp) == e1);

  // Super-resolution against the independent 2-D downsampler.
  const TaskSpec sr = tiny_sr(53);
  const Image xs = oracle::random_image(1, 8, 8, 54);
  const Image down = oracle::lanczos_downsample_2d(xs, 4);
  double want = 0.0;
  for (Eigen::Index i = 0; i < down.size(); ++i) {
    const double r = down.data[i] - sr.target.data[i];
    want += r * r;
  }
  CHECK(energy(xs, sr) == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("task builders validate their shapes") {
  const Image x0 = oracle::random_image(1, 8, 8, 60);
  CHECK_THROWS_AS(make_denoise_task(x0, gen_gaussian_pn(1, 8, 4, 0.04, 1)), InvalidArgument);
  CHECK_THROWS_AS(make_sr_task(x0, 3, gen_gaussian_pn(1, 24, 24, 0.04, 1)), InvalidArgument);
  CHECK_THROWS_AS(make_sr_task(x0, 4, gen_gaussian_pn(1, 8, 8, 0.04, 1)), InvalidArgument);
  Mask empty(8, 8);
  CHECK_THROWS_AS(make_inpaint_task(x0, empty, gen_sinusoid_pn(1, 8, 8, 2)), InvalidArgument);
  CHECK_THROWS_AS(make_inpaint_task(x0, Mask(4, 4), gen_sinusoid_pn(1, 8, 8, 2)),
                  InvalidArgument);
}

TEST_CASE("energy gradients with respect to the output match finite differences") {
  for (const TaskSpec& task : {tiny_denoise(61), tiny_sr(62), tiny_inpaint(63)}) {
    Image x = oracle::random_image(1, 8, 8, 64);
    const Image g = energy_grad(x, task);
    Rng pick(65);
    for (int probe = 0; probe < 12; ++probe) {
      const Eigen::Index i =
          static_cast<Eigen::Index>(pick.uniform01() * static_cast<double>(x.size()));
      const double keep = x.data[i];
      const double delta = 1e-3;
      x.data[i] = keep + delta;
      const double ep = energy(x, task);
      x.data[i] = keep - delta;
      const double em = energy(x, task);
      x.data[i] = keep;
      const double fd = (ep - em) / (2.0 * delta);
      const double rel =
          std::abs(g.data[i] - fd) / std::max({std::abs(g.data[i]), std::abs(fd), 1e-6});
      CHECK(rel <= 1e-4);
    }
  }
}

TEST_CASE("full-network gradients match finite differences on every parameter") {
  TrainState st = net_init(tiny_config(), 1, 8, 8);
  REQUIRE(st.params.size() <= 500);
  check_full_gradient(st, tiny_denoise(70), 1e-3);
  check_full_gradient(st, tiny_sr(71), 1e-3);
  check_full_gradient(st, tiny_inpaint(72), 1e-3);
}

TEST_CASE("bilinear-upsampling path passes the same gradient check") {
  NetConfig cfg;
  cfg.input_channels = 2;
  cfg.depth = 1;
  cfg.channels_per_level = {2};
  cfg.skip_channels = {1};
  cfg.channel_norm = false;
  cfg.upsample = NetConfig::Upsample::kBilinear;
  cfg.seed = 9;
  TrainState st = net_init(cfg, 1, 8, 8);
  REQUIRE(st.params.size() <= 500);
  check_full_gradient(st, tiny_denoise(73), 1e-3);
}

TEST_CASE("zero learning rate repeats the loss and keeps parameters frozen") {
  TrainState st = net_init(tiny_config(), 1, 8, 8);
  const TaskSpec task = tiny_denoise(80);
  const Eigen::ArrayXd before = st.params;
  const StepResult r1 = backward_step(st, task, 0.0);
  const StepResult r2 = backward_step(st, task, 0.0);
  CHECK((st.params == before).all());
  CHECK(r1.loss == r2.loss);
  CHECK((r1.image.data == r2.image.data).all());
  CHECK(st.step == 2);

  CHECK_THROWS_AS(backward_step(st, task, -0.1), InvalidArgument);
}

TEST_CASE("the monitored iterate is the pre-update reconstruction") {
  TrainState st = net_init(tiny_config(), 1, 8, 8);
  const TaskSpec task = tiny_denoise(81);
  const Image pre = forward(st);
  const StepResult r = backward_step(st, task, 0.01);
  CHECK((r.image.data == pre.data).all());
  CHECK(r.loss == energy(pre, task));
  CHECK((forward(st).data != pre.data).any());
}

TEST_CASE("the input tensor stays frozen while training") {
  NetConfig cfg = tiny_config();
  cfg.z_jitter = 1.0 / 30.0;
  TrainState st = net_init(cfg, 1, 8, 8);
  const Eigen::ArrayXd z0 = st.z.data;
  const TaskSpec task = tiny_denoise(82);
  for (int i = 0; i < 5; ++i) backward_step(st, task, 0.01);
  CHECK((st.z.data == z0).all());
}

TEST_CASE("training is reproducible, with and without input jitter") {
  for (double jitter : {0.0, 1.0 / 30.0}) {
    NetConfig cfg = tiny_config();
    cfg.z_jitter = jitter;
    TrainState a = net_init(cfg, 1, 8, 8);
    TrainState b = net_init(cfg, 1, 8, 8);
    const TaskSpec task = tiny_denoise(83);
    for (int i = 0; i < 5; ++i) {
      const StepResult ra = backward_step(a, task, 0.01);
      const StepResult rb = backward_step(b, task, 0.01);
      CHECK(ra.loss == rb.loss);
      CHECK((ra.image.data == rb.image.data).all());
    }
    CHECK((a.params == b.params).all());
  }
}

TEST_CASE("a non-finite loss raises a divergence error naming the step") {
  TrainState st = net_init(tiny_config(), 1, 8, 8);
  st.params[0] = std::numeric_limits<double>::quiet_NaN();
  const TaskSpec task = tiny_denoise(84);
  CHECK_THROWS_WITH_AS(backward_step(st, task, 0.01),
                       doctest::Contains("step 1"), DivergenceError);
}

TEST_CASE("hundred-step loss window means never increase early in training") {
  NetConfig cfg;  // reference topology at a quarter scale
  cfg.seed = 1;
  const Image gt = make_test_scene(32, 32, 2);
  const TaskSpec task = make_denoise_task(gt, gen_gaussian_pn(3, 32, 32, 1.0 / 25.0, 3));
  TrainState st = net_init(cfg, 3, 32, 32);
  std::vector<double> loss;
  for (int i = 0; i < 1000; ++i) loss.push_back(backward_step(st, task, 0.01).loss);
  double prev = std::numeric_limits<double>::infinity();
  for (int w = 0; w < 10; ++w) {
    double mean = 0.0;
    for (int i = 0; i < 100; ++i) mean += loss[static_cast<size_t>(100 * w + i)];
    mean /= 100.0;
    CHECK(mean <= prev * (1.0 + 1e-12));
    prev = mean;
  }
}

TEST_CASE("checkpoints restore training bit for bit") {
  TrainState st = net_init(tiny_config(), 1, 8, 8);
  const TaskSpec task = tiny_denoise(90);
  for (int i = 0; i < 3; ++i) backward_step(st, task, 0.01);
  save_checkpoint(st, kTmp + "/state.ckpt");

  TrainState other = net_init(tiny_config(), 1, 8, 8);
  for (int i = 0; i < 7; ++i) backward_step(other, task, 0.02);
  load_checkpoint(other, kTmp + "/state.ckpt");
  CHECK(other.step == st.step);
  CHECK((other.params == st.params).all());
  CHECK((other.adam_m == st.adam_m).all());
  CHECK((other.adam_v == st.adam_v).all());
  CHECK((other.z.data == st.z.data).all());

  const StepResult ra = backward_step(st, task, 0.01);
  const StepResult rb = backward_step(other, task, 0.01);
  CHECK(ra.loss == rb.loss);
  CHECK((st.params == other.params).all());

  TrainState wrong = net_init(tiny_config(), 1, 16, 16);
  CHECK_THROWS_AS(load_checkpoint(wrong, kTmp + "/state.ckpt"), IoError);
  CHECK_THROWS_AS(load_checkpoint(st, kTmp + "/nope.ckpt"), IoError);
}

TEST_CASE("net config validation rejects inconsistent settings") {
  NetConfig cfg = tiny_config();
  cfg.depth = 3;  // now the per-level lists are too short
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = tiny_config();
  cfg.leaky_slope = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = tiny_config();
  cfg.z_scale = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = tiny_config();
  cfg.z_jitter = -0.01;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = tiny_config();
  cfg.channels_per_level[0] = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}
