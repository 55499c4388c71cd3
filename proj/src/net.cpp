#include "dipstop/net.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <utility>

#include "dipstop/error.hpp"

namespace dipstop {

namespace {

int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -1 - i;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

Image concat_channels(const Image& a, const Image& b) {
  Image out(a.channels + b.channels, a.height, a.width);
  out.data.head(a.data.size()) = a.data;
  out.data.tail(b.data.size()) = b.data;
  return out;
}

std::pair<Image, Image> split_channels(const Image& x, int first_c) {
  Image a(first_c, x.height, x.width);
  Image b(x.channels - first_c, x.height, x.width);
  a.data = x.data.head(a.data.size());
  b.data = x.data.tail(b.data.size());
  return {std::move(a), std::move(b)};
}

// High stream ids so they never collide with the per-row noise sub-streams
// drawn from the same base seed.
constexpr std::uint64_t kZStream = 0x6e65745f7a000000;       // "net_z"
constexpr std::uint64_t kJitterStream = 0x6e65745f6a000000;  // "net_j"
constexpr std::uint64_t kParamStream = 0x6e65745f70000000;   // "net_p"

}  // namespace

void NetConfig::validate() const {
  if (input_channels < 1) throw InvalidArgument("net: input_channels must be >= 1");
  if (depth < 1) throw InvalidArgument("net: depth must be >= 1");
  if (static_cast<int>(channels_per_level.size()) != depth ||
      static_cast<int>(skip_channels.size()) != depth) {
    throw InvalidArgument("net: need one channel count and one skip width per level");
  }
  for (int c : channels_per_level)
    if (c < 1) throw InvalidArgument("net: channels_per_level entries must be >= 1");
  for (int c : skip_channels)
    if (c < 1) throw InvalidArgument("net: skip_channels entries must be >= 1");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0))
    throw InvalidArgument("net: leaky_slope must be in [0, 1)");
  if (!(z_scale > 0.0)) throw InvalidArgument("net: z_scale must be positive");
  if (!(z_jitter >= 0.0)) throw InvalidArgument("net: z_jitter must be >= 0");
}

namespace detail {

Conv::Conv(int cin, int cout, int ksize, int stride, int in_h, int in_w)
    : cin_(cin), cout_(cout), k_(ksize), stride_(stride), in_h_(in_h), in_w_(in_w) {
  const int pad = k_ / 2;
  out_h_ = (in_h_ + 2 * pad - k_) / stride_ + 1;
  out_w_ = (in_w_ + 2 * pad - k_) / stride_ + 1;
  gather_.resize(static_cast<size_t>(out_h_) * out_w_ * k_ * k_);
  size_t g = 0;
  for (int oy = 0; oy < out_h_; ++oy) {
    for (int ox = 0; ox < out_w_; ++ox) {
      for (int dy = 0; dy < k_; ++dy) {
        const int iy = reflect_index(oy * stride_ - pad + dy, in_h_);
        for (int dx = 0; dx < k_; ++dx) {
          const int ix = reflect_index(ox * stride_ - pad + dx, in_w_);
          gather_[g++] = iy * in_w_ + ix;
        }
      }
    }
  }
}

void Conv::init(std::span<double> params, Rng& rng, double gain) const {
  const int nw = cout_ * cin_ * k_ * k_;
  const double stddev = gain / std::sqrt(static_cast<double>(cin_ * k_ * k_));
  for (int i = 0; i < nw; ++i) params[off_ + i] = rng.normal(0.0, stddev);
  for (int i = 0; i < cout_; ++i) params[off_ + nw + i] = 0.0;
}

Image Conv::forward(const Image& x, std::span<const double> params) {
  const int kk = k_ * k_;
  const int npix = out_h_ * out_w_;
  const int rows = cin_ * kk;
  col_.resize(rows, npix);
  for (int ci = 0; ci < cin_; ++ci) {
    const double* xp = x.data.data() + static_cast<Eigen::Index>(ci) * in_h_ * in_w_;
    for (int op = 0; op < npix; ++op) {
      const int* g = gather_.data() + static_cast<size_t>(op) * kk;
      double* dst = col_.data() + static_cast<Eigen::Index>(op) * rows + ci * kk;
      for (int t = 0; t < kk; ++t) dst[t] = xp[g[t]];
    }
  }
  Eigen::Map<const Eigen::MatrixXd> W(params.data() + off_, cout_, rows);
  Eigen::Map<const Eigen::VectorXd> b(params.data() + off_ + cout_ * rows, cout_);
  Image y(cout_, out_h_, out_w_);
  // Planar output viewed as a (pixels x channels) column-major matrix.
  Eigen::Map<Eigen::MatrixXd> Y(y.data.data(), npix, cout_);
  Y.noalias() = col_.transpose() * W.transpose();
  Y.rowwise() += b.transpose();
  return y;
}

Image Conv::backward(const Image& dy, std::span<const double> params,
                     std::span<double> grads) const {
  const int kk = k_ * k_;
  const int npix = out_h_ * out_w_;
  const int rows = cin_ * kk;
  Eigen::Map<const Eigen::MatrixXd> dY(dy.data.data(), npix, cout_);
  Eigen::Map<const Eigen::MatrixXd> W(params.data() + off_, cout_, rows);
  Eigen::Map<Eigen::MatrixXd> dW(grads.data() + off_, cout_, rows);
  Eigen::Map<Eigen::VectorXd> db(grads.data() + off_ + cout_ * rows, cout_);
  dW.noalias() += dY.transpose() * col_.transpose();
  db.noalias() += dY.colwise().sum().transpose();
  Eigen::MatrixXd dcolT(npix, rows);
  dcolT.noalias() = dY * W;
  Image dx(cin_, in_h_, in_w_);
  for (int ci = 0; ci < cin_; ++ci) {
    double* xg = dx.data.data() + static_cast<Eigen::Index>(ci) * in_h_ * in_w_;
    for (int t = 0; t < kk; ++t) {
      const double* col = dcolT.data() + static_cast<Eigen::Index>(ci * kk + t) * npix;
      for (int op = 0; op < npix; ++op) {
        xg[gather_[static_cast<size_t>(op) * kk + t]] += col[op];
      }
    }
  }
  return dx;
}

void ChannelNorm::init(std::span<double> params) const {
  for (int c = 0; c < c_; ++c) params[off_ + c] = 1.0;
  for (int c = 0; c < c_; ++c) params[off_ + c_ + c] = 0.0;
}

Image ChannelNorm::forward(const Image& x, std::span<const double> params) {
  constexpr double kEps = 1e-5;
  const Eigen::Index npix = static_cast<Eigen::Index>(x.height) * x.width;
  xhat_.resize(x.data.size());
  invstd_.resize(c_);
  Image y(x.channels, x.height, x.width);
  for (int c = 0; c < c_; ++c) {
    auto seg = x.data.segment(c * npix, npix);
    const double mu = seg.mean();
    const double var = (seg - mu).square().mean();
    const double inv = 1.0 / std::sqrt(var + kEps);
    invstd_[c] = inv;
    xhat_.segment(c * npix, npix) = (seg - mu) * inv;
    y.data.segment(c * npix, npix) =
        params[off_ + c] * xhat_.segment(c * npix, npix) + params[off_ + c_ + c];
  }
  return y;
}

Image ChannelNorm::backward(const Image& dy, std::span<const double> params,
                            std::span<double> grads) const {
  const Eigen::Index npix = static_cast<Eigen::Index>(dy.height) * dy.width;
  Image dx(dy.channels, dy.height, dy.width);
  for (int c = 0; c < c_; ++c) {
    auto d = dy.data.segment(c * npix, npix);
    auto xh = xhat_.segment(c * npix, npix);
    grads[off_ + c] += (d * xh).sum();
    grads[off_ + c_ + c] += d.sum();
    const double g = params[off_ + c];
    Eigen::ArrayXd dxh = g * d;
    const double m1 = dxh.mean();
    const double m2 = (dxh * xh).mean();
    dx.data.segment(c * npix, npix) = invstd_[c] * (dxh - m1 - xh * m2);
  }
  return dx;
}

Image LeakyRelu::forward(const Image& x) {
  mult_ = (x.data > 0.0).select(Eigen::ArrayXd::Constant(x.data.size(), 1.0),
                                Eigen::ArrayXd::Constant(x.data.size(), slope_));
  Image y(x.channels, x.height, x.width);
  y.data = x.data * mult_;
  return y;
}

Image LeakyRelu::backward(const Image& dy) const {
  Image dx(dy.channels, dy.height, dy.width);
  dx.data = dy.data * mult_;
  return dx;
}

ConvBlock::ConvBlock(int cin, int cout, int ksize, int stride, int in_h, int in_w,
                     bool norm, double slope)
    : conv_(cin, cout, ksize, stride, in_h, in_w), act_(slope) {
  if (norm) norm_.emplace(cout);
}

int ConvBlock::param_count() const {
  return conv_.param_count() + (norm_ ? norm_->param_count() : 0);
}

int ConvBlock::bind(int offset) {
  conv_.bind(offset);
  offset += conv_.param_count();
  if (norm_) {
    norm_->bind(offset);
    offset += norm_->param_count();
  }
  return offset;
}

void ConvBlock::init(std::span<double> params, Rng& rng, double gain) const {
  conv_.init(params, rng, gain);
  if (norm_) norm_->init(params);
}

Image ConvBlock::forward(const Image& x, std::span<const double> params) {
  Image y = conv_.forward(x, params);
  if (norm_) y = norm_->forward(y, params);
  return act_.forward(y);
}

Image ConvBlock::backward(const Image& dy, std::span<const double> params,
                          std::span<double> grads) const {
  Image d = act_.backward(dy);
  if (norm_) d = norm_->backward(d, params, grads);
  return conv_.backward(d, params, grads);
}

Upsample2x::Upsample2x(NetConfig::Upsample mode, int in_h, int in_w)
    : mode_(mode), in_h_(in_h), in_w_(in_w) {
  auto build = [this](Lin& lin, int n_in) {
    const int n_out = 2 * n_in;
    lin.i0.resize(n_out);
    lin.i1.resize(n_out);
    lin.w0.resize(n_out);
    lin.w1.resize(n_out);
    for (int o = 0; o < n_out; ++o) {
      if (mode_ == NetConfig::Upsample::kNearest) {
        lin.i0[o] = o / 2;
        lin.i1[o] = o / 2;
        lin.w0[o] = 1.0;
        lin.w1[o] = 0.0;
      } else {
        // Half-pixel centers: output o samples input at (o + 0.5)/2 - 0.5.
        const double src = 0.5 * (o + 0.5) - 0.5;
        const double f = std::floor(src);
        const double t = src - f;
        int i0 = static_cast<int>(f);
        int i1 = i0 + 1;
        i0 = std::clamp(i0, 0, n_in - 1);
        i1 = std::clamp(i1, 0, n_in - 1);
        lin.i0[o] = i0;
        lin.i1[o] = i1;
        lin.w0[o] = 1.0 - t;
        lin.w1[o] = t;
      }
    }
  };
  build(cols_, in_h_);
  build(rows_, in_w_);
}

Image Upsample2x::forward(const Image& x) const {
  const int oh = 2 * in_h_, ow = 2 * in_w_;
  Image y(x.channels, oh, ow);
  Eigen::ArrayXd tmp(static_cast<Eigen::Index>(in_h_) * ow);
  for (int c = 0; c < x.channels; ++c) {
    const double* xp = x.data.data() + static_cast<Eigen::Index>(c) * in_h_ * in_w_;
    for (int yrow = 0; yrow < in_h_; ++yrow) {
      const double* r = xp + static_cast<Eigen::Index>(yrow) * in_w_;
      double* o = tmp.data() + static_cast<Eigen::Index>(yrow) * ow;
      for (int xcol = 0; xcol < ow; ++xcol) {
        o[xcol] = rows_.w0[xcol] * r[rows_.i0[xcol]] + rows_.w1[xcol] * r[rows_.i1[xcol]];
      }
    }
    double* yp = y.data.data() + static_cast<Eigen::Index>(c) * oh * ow;
    for (int yrow = 0; yrow < oh; ++yrow) {
      const double* r0 = tmp.data() + static_cast<Eigen::Index>(cols_.i0[yrow]) * ow;
      const double* r1 = tmp.data() + static_cast<Eigen::Index>(cols_.i1[yrow]) * ow;
      double* o = yp + static_cast<Eigen::Index>(yrow) * ow;
      for (int xcol = 0; xcol < ow; ++xcol) {
        o[xcol] = cols_.w0[yrow] * r0[xcol] + cols_.w1[yrow] * r1[xcol];
      }
    }
  }
  return y;
}

Image Upsample2x::backward(const Image& dy) const {
  const int oh = 2 * in_h_, ow = 2 * in_w_;
  Image dx(dy.channels, in_h_, in_w_);
  Eigen::ArrayXd tmp(static_cast<Eigen::Index>(in_h_) * ow);
  for (int c = 0; c < dy.channels; ++c) {
    tmp.setZero();
    const double* gp = dy.data.data() + static_cast<Eigen::Index>(c) * oh * ow;
    for (int yrow = 0; yrow < oh; ++yrow) {
      const double* g = gp + static_cast<Eigen::Index>(yrow) * ow;
      double* t0 = tmp.data() + static_cast<Eigen::Index>(cols_.i0[yrow]) * ow;
      double* t1 = tmp.data() + static_cast<Eigen::Index>(cols_.i1[yrow]) * ow;
      for (int xcol = 0; xcol < ow; ++xcol) {
        t0[xcol] += cols_.w0[yrow] * g[xcol];
        t1[xcol] += cols_.w1[yrow] * g[xcol];
      }
    }
    double* xp = dx.data.data() + static_cast<Eigen::Index>(c) * in_h_ * in_w_;
    for (int yrow = 0; yrow < in_h_; ++yrow) {
      const double* t = tmp.data() + static_cast<Eigen::Index>(yrow) * ow;
      double* o = xp + static_cast<Eigen::Index>(yrow) * in_w_;
      for (int xcol = 0; xcol < ow; ++xcol) {
        o[rows_.i0[xcol]] += rows_.w0[xcol] * t[xcol];
        o[rows_.i1[xcol]] += rows_.w1[xcol] * t[xcol];
      }
    }
  }
  return dx;
}

}  // namespace detail

DipNet::DipNet(const NetConfig& cfg, int out_channels, int height, int width)
    : cfg_(cfg),
      out_c_(out_channels),
      h_(height),
      w_(width),
      head_(cfg.channels_per_level.empty() ? 1 : cfg.channels_per_level[0], out_channels,
            1, 1, height, width) {
  cfg_.validate();
  if (out_channels < 1) throw InvalidArgument("net: output channels must be >= 1");
  const int D = cfg_.depth;
  if (height % (1 << D) != 0 || width % (1 << D) != 0) {
    throw InvalidArgument("net: image size must be a multiple of 2^depth (" +
                          std::to_string(1 << D) + ")");
  }
  const auto& ch = cfg_.channels_per_level;
  const auto& sk = cfg_.skip_channels;
  const bool norm = cfg_.channel_norm;
  const double slope = cfg_.leaky_slope;
  std::vector<int> dch(D);
  for (int k = 0; k < D; ++k) dch[k] = ch[k == 0 ? 0 : k - 1];
  dec_in_c_.resize(D);
  for (int k = 0; k < D; ++k) {
    const int rh = height >> k, rw = width >> k;
    const int cin = (k == 0) ? cfg_.input_channels : ch[k - 1];
    enc_a_.emplace_back(cin, ch[k], 3, 2, rh, rw, norm, slope);
    enc_b_.emplace_back(ch[k], ch[k], 3, 1, rh / 2, rw / 2, norm, slope);
    skip_.emplace_back(cin, sk[k], 1, 1, rh, rw, norm, slope);
  }
  for (int k = 0; k < D; ++k) {
    const int rh = height >> k, rw = width >> k;
    const int up_c = (k == D - 1) ? ch[D - 1] : dch[k + 1];
    up_.emplace_back(cfg_.upsample, rh / 2, rw / 2);
    dec_in_c_[k] = up_c + sk[k];
    dec_a_.emplace_back(dec_in_c_[k], dch[k], 3, 1, rh, rw, norm, slope);
    dec_b_.emplace_back(dch[k], dch[k], 1, 1, rh, rw, norm, slope);
  }
  // Parameter layout: encoder (a, b, skip per level), decoder deepest first,
  // head last.
  int off = 0;
  for (int k = 0; k < D; ++k) {
    off = enc_a_[k].bind(off);
    off = enc_b_[k].bind(off);
    off = skip_[k].bind(off);
  }
  for (int k = D - 1; k >= 0; --k) {
    off = dec_a_[k].bind(off);
    off = dec_b_[k].bind(off);
  }
  head_.bind(off);
  off += head_.param_count();
  param_count_ = off;
  xin_.resize(D + 1);
  skip_out_.resize(D);
}

void DipNet::init_params(std::span<double> params, Rng& rng) const {
  if (static_cast<int>(params.size()) != param_count_)
    throw InvalidArgument("net: parameter vector size mismatch");
  const int D = cfg_.depth;
  // Forward gain for the leaky ReLU that follows every non-head conv.
  const double gain = std::sqrt(2.0 / (1.0 + cfg_.leaky_slope * cfg_.leaky_slope));
  for (int k = 0; k < D; ++k) {
    enc_a_[k].init(params, rng, gain);
    enc_b_[k].init(params, rng, gain);
    skip_[k].init(params, rng, gain);
  }
  for (int k = D - 1; k >= 0; --k) {
    dec_a_[k].init(params, rng, gain);
    dec_b_[k].init(params, rng, gain);
  }
  head_.init(params, rng, 1.0);
}

Image DipNet::forward(const Image& z, std::span<const double> params) {
  if (z.channels != cfg_.input_channels || z.height != h_ || z.width != w_)
    throw InvalidArgument("net forward: input tensor has the wrong shape");
  const int D = cfg_.depth;
  xin_[0] = z;
  for (int k = 0; k < D; ++k) {
    skip_out_[k] = skip_[k].forward(xin_[k], params);
    Image e = enc_a_[k].forward(xin_[k], params);
    xin_[k + 1] = enc_b_[k].forward(e, params);
  }
  Image cur = xin_[D];
  for (int k = D - 1; k >= 0; --k) {
    Image cat = concat_channels(up_[k].forward(cur), skip_out_[k]);
    cur = dec_b_[k].forward(dec_a_[k].forward(cat, params), params);
  }
  Image logits = head_.forward(cur, params);
  sig_out_ = Image(out_c_, h_, w_);
  sig_out_.data = 1.0 / (1.0 + (-logits.data).exp());
  return sig_out_;
}

Image DipNet::backward(const Image& dout, std::span<const double> params,
                       std::span<double> grads) {
  if (sig_out_.size() == 0)
    throw InvalidArgument("net backward: no forward pass to differentiate");
  const int D = cfg_.depth;
  Image d(out_c_, h_, w_);
  d.data = dout.data * sig_out_.data * (1.0 - sig_out_.data);
  d = head_.backward(d, params, grads);
  std::vector<Image> dskip(D);
  for (int k = 0; k < D; ++k) {
    d = dec_a_[k].backward(dec_b_[k].backward(d, params, grads), params, grads);
    auto [du, ds] = split_channels(d, dec_in_c_[k] - skip_out_[k].channels);
    dskip[k] = std::move(ds);
    d = up_[k].backward(du);
  }
  for (int k = D - 1; k >= 0; --k) {
    Image de = enc_b_[k].backward(d, params, grads);
    d = enc_a_[k].backward(de, params, grads);
    d.data += skip_[k].backward(dskip[k], params, grads).data;
  }
  return d;
}

TrainState net_init(const NetConfig& cfg, int out_channels, int height, int width) {
  cfg.validate();
  TrainState st{cfg, DipNet(cfg, out_channels, height, width),
                Eigen::ArrayXd(),   Eigen::ArrayXd(),
                Eigen::ArrayXd(),   Eigen::ArrayXd(),
                0,                  Image(),
                Rng::substream(cfg.seed, kJitterStream)};
  const int n = st.net.param_count();
  st.params.resize(n);
  st.grads = Eigen::ArrayXd::Zero(n);
  st.adam_m = Eigen::ArrayXd::Zero(n);
  st.adam_v = Eigen::ArrayXd::Zero(n);
  Rng prng = Rng::substream(cfg.seed, kParamStream);
  st.net.init_params(std::span<double>(st.params.data(), st.params.size()), prng);
  st.z = Image(cfg.input_channels, height, width);
  Rng zrng = Rng::substream(cfg.seed, kZStream);
  for (Eigen::Index i = 0; i < st.z.data.size(); ++i)
    st.z.data[i] = zrng.uniform(0.0, cfg.z_scale);
  return st;
}

Image forward(TrainState& state) {
  return state.net.forward(
      state.z, std::span<const double>(state.params.data(), state.params.size()));
}

StepResult backward_step(TrainState& state, const TaskSpec& task, double lr) {
  if (!(lr >= 0.0)) throw InvalidArgument("backward_step: learning rate must be >= 0");
  std::span<const double> params(state.params.data(), state.params.size());
  Image x;
  if (state.cfg.z_jitter > 0.0) {
    Image zj = state.z;
    for (Eigen::Index i = 0; i < zj.data.size(); ++i)
      zj.data[i] += state.jitter_rng.normal(0.0, state.cfg.z_jitter);
    x = state.net.forward(zj, params);
  } else {
    x = state.net.forward(state.z, params);
  }
  const double loss = energy(x, task);
  if (!std::isfinite(loss)) {
    throw DivergenceError("training diverged at step " + std::to_string(state.step + 1) +
                          ": energy is not finite");
  }
  Image dE = energy_grad(x, task);
  state.grads.setZero();
  state.net.backward(dE, params, std::span<double>(state.grads.data(), state.grads.size()));

  state.step += 1;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  state.adam_m = kBeta1 * state.adam_m + (1.0 - kBeta1) * state.grads;
  state.adam_v = kBeta2 * state.adam_v + (1.0 - kBeta2) * state.grads.square();
  state.params -= lr * (state.adam_m / bc1) / ((state.adam_v / bc2).sqrt() + kEps);
  return {std::move(x), loss};
}

namespace {

constexpr char kCkptMagic[8] = {'D', 'P', 'C', 'K', '0', '0', '0', '1'};

void put_u64(std::FILE* f, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  if (std::fwrite(b, 1, 8, f) != 8) throw IoError("checkpoint: write failed");
}

std::uint64_t get_u64(std::FILE* f) {
  unsigned char b[8];
  if (std::fread(b, 1, 8, f) != 8) throw IoError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f64_block(std::FILE* f, const double* p, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) put_u64(f, std::bit_cast<std::uint64_t>(p[i]));
}

void get_f64_block(std::FILE* f, double* p, Eigen::Index n) {
  for (Eigen::Index i = 0; i < n; ++i) p[i] = std::bit_cast<double>(get_u64(f));
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("checkpoint: cannot open " + path + " for writing");
  try {
    if (std::fwrite(kCkptMagic, 1, 8, f) != 8) throw IoError("checkpoint: write failed");
    put_u64(f, static_cast<std::uint64_t>(state.params.size()));
    put_u64(f, static_cast<std::uint64_t>(state.z.channels));
    put_u64(f, static_cast<std::uint64_t>(state.z.height));
    put_u64(f, static_cast<std::uint64_t>(state.z.width));
    put_u64(f, static_cast<std::uint64_t>(state.step));
    put_f64_block(f, state.params.data(), state.params.size());
    put_f64_block(f, state.adam_m.data(), state.adam_m.size());
    put_f64_block(f, state.adam_v.data(), state.adam_v.size());
    put_f64_block(f, state.z.data.data(), state.z.data.size());
  } catch (...) {
    std::fclose(f);
    throw;
  }
  if (std::fclose(f) != 0) throw IoError("checkpoint: close failed for " + path);
}

void load_checkpoint(TrainState& state, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw IoError("checkpoint: cannot open " + path);
  try {
    char magic[8];
    if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kCkptMagic, 8) != 0)
      throw IoError("checkpoint: bad magic in " + path);
    const auto n = static_cast<Eigen::Index>(get_u64(f));
    const auto zc = static_cast<int>(get_u64(f));
    const auto zh = static_cast<int>(get_u64(f));
    const auto zw = static_cast<int>(get_u64(f));
    const auto step = static_cast<long>(get_u64(f));
    if (n != state.params.size() || zc != state.z.channels || zh != state.z.height ||
        zw != state.z.width) {
      throw IoError("checkpoint: shape mismatch with the current network");
    }
    state.step = step;
    get_f64_block(f, state.params.data(), n);
    get_f64_block(f, state.adam_m.data(), n);
    get_f64_block(f, state.adam_v.data(), n);
    get_f64_block(f, state.z.data.data(), state.z.data.size());
  } catch (...) {
    std::fclose(f);
    throw;
  }
  std::fclose(f);
}

}  // namespace dipstop
