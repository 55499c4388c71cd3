#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dipstop/image.hpp"
#include "dipstop/rng.hpp"
#include "dipstop/task.hpp"

namespace dipstop {

// Scaled-down encoder-decoder generator. depth levels, each halving the
// spatial size with a stride-2 3x3 convolution followed by a stride-1 3x3
// convolution; skip branches are 1x1 convolutions taken from each level's
// input; the decoder mirrors with 2x upsampling, skip concatenation, a 3x3
// and a 1x1 convolution per level; a 1x1 head with a sigmoid produces the
// image. Every convolution uses reflect padding and is optionally followed
// by a per-channel affine normalization, then a leaky ReLU.
struct NetConfig {
  int input_channels = 8;
  int depth = 3;
  std::vector<int> channels_per_level = {16, 32, 64};
  std::vector<int> skip_channels = {4, 4, 4};
  double leaky_slope = 0.1;
  enum class Upsample { kNearest, kBilinear };
  Upsample upsample = Upsample::kNearest;
  bool channel_norm = true;  // per-channel mean/variance normalization with
                             // learned gain and offset after every conv
  double z_scale = 0.1;      // z ~ U(0, z_scale), frozen after init
  double z_jitter = 0.0;     // per-step gaussian perturbation of z; 0 keeps z
                             // fixed, > 0 draws from a seeded sub-stream
  std::uint64_t seed = 0;

  void validate() const;
};

namespace detail {

class Conv {
 public:
  Conv(int cin, int cout, int ksize, int stride, int in_h, int in_w);
  int param_count() const { return cout_ * (cin_ * k_ * k_ + 1); }
  void bind(int offset) { off_ = offset; }
  int offset() const { return off_; }
  void init(std::span<double> params, Rng& rng, double gain) const;
  Image forward(const Image& x, std::span<const double> params);
  Image backward(const Image& dy, std::span<const double> params,
                 std::span<double> grads) const;
  int out_h() const { return out_h_; }
  int out_w() const { return out_w_; }
  int out_c() const { return cout_; }

 private:
  int cin_, cout_, k_, stride_;
  int in_h_, in_w_, out_h_, out_w_;
  int off_ = -1;
  std::vector<int> gather_;  // (out_pix * k*k) reflect-padded source indices
  Eigen::MatrixXd col_;      // cached im2col matrix from the last forward
};

class ChannelNorm {
 public:
  ChannelNorm(int channels) : c_(channels) {}
  int param_count() const { return 2 * c_; }
  void bind(int offset) { off_ = offset; }
  void init(std::span<double> params) const;
  Image forward(const Image& x, std::span<const double> params);
  Image backward(const Image& dy, std::span<const double> params,
                 std::span<double> grads) const;

 private:
  int c_;
  int off_ = -1;
  Eigen::ArrayXd xhat_;    // cached normalized input
  Eigen::ArrayXd invstd_;  // per channel
};

class LeakyRelu {
 public:
  explicit LeakyRelu(double slope) : slope_(slope) {}
  Image forward(const Image& x);
  Image backward(const Image& dy) const;

 private:
  double slope_;
  Eigen::ArrayXd mult_;  // 1 where x > 0, slope elsewhere
};

// conv [+ norm] + leaky relu
class ConvBlock {
 public:
  ConvBlock(int cin, int cout, int ksize, int stride, int in_h, int in_w,
            bool norm, double slope);
  int param_count() const;
  int bind(int offset);  // returns offset past this block
  void init(std::span<double> params, Rng& rng, double gain) const;
  Image forward(const Image& x, std::span<const double> params);
  Image backward(const Image& dy, std::span<const double> params,
                 std::span<double> grads) const;
  const Conv& conv() const { return conv_; }

 private:
  Conv conv_;
  std::optional<ChannelNorm> norm_;
  LeakyRelu act_;
};

// Fixed 2x upsampling along both axes, nearest or bilinear (half-pixel
// centers, edges clamped).
class Upsample2x {
 public:
  Upsample2x(NetConfig::Upsample mode, int in_h, int in_w);
  Image forward(const Image& x) const;
  Image backward(const Image& dy) const;

 private:
  NetConfig::Upsample mode_;
  int in_h_, in_w_;
  struct Lin {
    std::vector<int> i0, i1;
    std::vector<double> w0, w1;
  };
  Lin rows_, cols_;
};

}  // namespace detail

// The generator with static shapes; owns the topology, index maps and
// forward caches but not the parameters, which live in a flat vector.
class DipNet {
 public:
  DipNet(const NetConfig& cfg, int out_channels, int height, int width);
  int param_count() const { return param_count_; }
  void init_params(std::span<double> params, Rng& rng) const;
  Image forward(const Image& z, std::span<const double> params);
  // Accumulates parameter gradients of the last forward into grads (caller
  // zeroes) and returns dL/dz.
  Image backward(const Image& dout, std::span<const double> params,
                 std::span<double> grads);

 private:
  NetConfig cfg_;
  int out_c_, h_, w_;
  int param_count_ = 0;
  std::vector<detail::ConvBlock> enc_a_, enc_b_, skip_;
  std::vector<detail::ConvBlock> dec_a_, dec_b_;
  std::vector<detail::Upsample2x> up_;
  detail::Conv head_;
  // forward caches
  std::vector<Image> xin_;       // level inputs, xin_[0] == z
  std::vector<Image> skip_out_;
  std::vector<int> dec_in_c_;    // channels entering dec_a_[k] (up + skip)
  Image sig_out_;
};

// Training state: flat parameters, Adam moments, the frozen input tensor and
// the jitter stream. Copyable; copies evolve independently.
struct TrainState {
  NetConfig cfg;
  DipNet net;
  Eigen::ArrayXd params;
  Eigen::ArrayXd grads;
  Eigen::ArrayXd adam_m;
  Eigen::ArrayXd adam_v;
  long step = 0;
  Image z;
  Rng jitter_rng{0};
};

// Builds the network for the target shape, seeds the parameters (He-style
// scaling) and draws the frozen z. Height and width must be multiples of
// 2^depth.
TrainState net_init(const NetConfig& cfg, int out_channels, int height, int width);

// Deterministic forward pass with the frozen z (no jitter).
Image forward(TrainState& state);

struct StepResult {
  Image image;  // reconstruction produced by this step, before the update
  double loss = 0.0;
};

// One optimization step: forward (with jitter when configured), energy,
// backprop, Adam update (beta1 0.9, beta2 0.999, eps 1e-8). Returns the
// pre-update reconstruction used for monitoring. Throws DivergenceError on a
// non-finite loss.
StepResult backward_step(TrainState& state, const TaskSpec& task, double lr);

// Checkpoint: magic, version, shape list, then the raw parameter vector as
// little-endian doubles.
void save_checkpoint(const TrainState& state, const std::string& path);
void load_checkpoint(TrainState& state, const std::string& path);

}  // namespace dipstop
