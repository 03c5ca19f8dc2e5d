#include "fiberseg/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fiberseg/errors.hpp"
#include "fiberseg/parallel.hpp"
#include "fiberseg/simd/kernels.hpp"

namespace fiberseg::nn {

namespace {

simd::ConvShape conv_shape(int in, int out, int k, const Dims& d) {
  return {in, out, k, d.depth, d.height, d.width};
}

// Copies `channels` volumes of `dims` into a zero border of width `pad`.
void pad_into(const double* src, int channels, const Dims& d, int pad, double* dst) {
  const int64_t pd = d.depth + 2 * pad, ph = d.height + 2 * pad, pw = d.width + 2 * pad;
  std::fill(dst, dst + channels * pd * ph * pw, 0.0);
  for (int c = 0; c < channels; ++c) {
    const double* s = src + c * d.size();
    double* t = dst + c * pd * ph * pw;
    for (int64_t z = 0; z < d.depth; ++z) {
      for (int64_t y = 0; y < d.height; ++y) {
        std::copy(s + (z * d.height + y) * d.width, s + (z * d.height + y + 1) * d.width,
                  t + ((z + pad) * ph + y + pad) * pw + pad);
      }
    }
  }
}

void normal_fill(std::vector<double>& v, Rng& rng, double stddev) {
  for (double& x : v) x = rng.normal(0.0, stddev);
}

}  // namespace

FeatureMap::FeatureMap(int batch_, int channels_, Dims dims_, double fill)
    : batch(batch_), channels(channels_), dims(dims_) {
  if (batch < 1 || channels < 1 || !dims.positive()) {
    throw std::invalid_argument("FeatureMap requires positive batch, channels and dims");
  }
  data.assign(static_cast<size_t>(batch) * channels * dims.size(), fill);
}

FeatureMap stack_tiles(const std::vector<const ScalarVolume*>& tiles) {
  if (tiles.empty()) throw std::invalid_argument("stack_tiles: no tiles");
  const Dims d = tiles.front()->dims();
  FeatureMap x(static_cast<int>(tiles.size()), 1, d);
  for (size_t n = 0; n < tiles.size(); ++n) {
    if (tiles[n]->dims() != d) throw std::invalid_argument("stack_tiles: tile dims differ");
    std::copy(tiles[n]->data().begin(), tiles[n]->data().end(), x.channel(static_cast<int>(n), 0));
  }
  return x;
}

// ---------------------------------------------------------------------------
// Conv3d

Conv3d::Conv3d(int in_channels, int out_channels, int kernel, bool with_bias)
    : in_(in_channels), out_(out_channels), k_(kernel) {
  if (in_ < 1 || out_ < 1) throw std::invalid_argument("Conv3d: channel counts must be >= 1");
  if (k_ != 1 && k_ != 3) throw std::invalid_argument("Conv3d: kernel must be 1 or 3");
  const auto n = static_cast<size_t>(out_) * in_ * k_ * k_ * k_;
  weight.assign(n, 0.0);
  grad_weight.assign(n, 0.0);
  if (with_bias) {
    bias.assign(static_cast<size_t>(out_), 0.0);
    grad_bias.assign(static_cast<size_t>(out_), 0.0);
  }
}

void Conv3d::init(Rng& rng, double gain) {
  const double fan_in = static_cast<double>(in_) * k_ * k_ * k_;
  normal_fill(weight, rng, std::sqrt(gain / fan_in));
  std::fill(bias.begin(), bias.end(), 0.0);
}

FeatureMap Conv3d::forward(const FeatureMap& x) {
  if (x.channels != in_) {
    throw std::invalid_argument("Conv3d: expected " + std::to_string(in_) + " input channels, got " +
                                std::to_string(x.channels));
  }
  const int pad = k_ / 2;
  const auto shape = conv_shape(in_, out_, k_, x.dims);
  const int64_t padded_sample = in_ * shape.padded_voxels();
  cached_batch_ = x.batch;
  cached_dims_ = x.dims;
  padded_input_.resize(static_cast<size_t>(x.batch * padded_sample));

  FeatureMap y(x.batch, out_, x.dims);
  const auto& kernels = simd::active();
  parallel_for(static_cast<size_t>(x.batch), [&](size_t n) {
    double* xp = padded_input_.data() + static_cast<int64_t>(n) * padded_sample;
    pad_into(x.channel(static_cast<int>(n), 0), in_, x.dims, pad, xp);
    kernels.conv_forward(shape, xp, weight.data(), y.channel(static_cast<int>(n), 0));
  });
  if (!bias.empty()) {
    for (int n = 0; n < y.batch; ++n) {
      for (int c = 0; c < out_; ++c) {
        double* ch = y.channel(n, c);
        const double b = bias[static_cast<size_t>(c)];
        for (int64_t i = 0; i < y.voxels(); ++i) ch[i] += b;
      }
    }
  }
  return y;
}

FeatureMap Conv3d::backward(const FeatureMap& dy, bool need_input_grad) {
  if (dy.channels != out_ || dy.batch != cached_batch_ || dy.dims != cached_dims_) {
    throw std::invalid_argument("Conv3d::backward: gradient shape does not match forward input");
  }
  const auto shape = conv_shape(in_, out_, k_, dy.dims);
  const int64_t padded_sample = in_ * shape.padded_voxels();
  const auto& kernels = simd::active();

  // Per-sample buffers reduced in sample order: identical sums for any thread count.
  std::vector<std::vector<double>> partial(static_cast<size_t>(dy.batch));
  parallel_for(static_cast<size_t>(dy.batch), [&](size_t n) {
    partial[n].assign(weight.size(), 0.0);
    kernels.conv_weight_grad(shape, padded_input_.data() + static_cast<int64_t>(n) * padded_sample,
                             dy.channel(static_cast<int>(n), 0), partial[n].data());
  });
  for (const auto& p : partial) {
    for (size_t i = 0; i < grad_weight.size(); ++i) grad_weight[i] += p[i];
  }
  if (!bias.empty()) {
    for (int n = 0; n < dy.batch; ++n) {
      for (int c = 0; c < out_; ++c) {
        const double* g = dy.channel(n, c);
        double s = 0.0;
        for (int64_t i = 0; i < dy.voxels(); ++i) s += g[i];
        grad_bias[static_cast<size_t>(c)] += s;
      }
    }
  }
  if (!need_input_grad) return {};

  // dL/dx is the correlation of the padded output gradient with the
  // spatially flipped, channel-transposed kernel.
  const int taps = k_ * k_ * k_;
  std::vector<double> flipped(weight.size());
  for (int co = 0; co < out_; ++co) {
    for (int ci = 0; ci < in_; ++ci) {
      for (int t = 0; t < taps; ++t) {
        flipped[(static_cast<size_t>(ci) * out_ + co) * taps + t] =
            weight[(static_cast<size_t>(co) * in_ + ci) * taps + (taps - 1 - t)];
      }
    }
  }
  const auto tshape = conv_shape(out_, in_, k_, dy.dims);
  const int64_t padded_grad = out_ * tshape.padded_voxels();
  std::vector<double> dy_pad(static_cast<size_t>(dy.batch * padded_grad));
  FeatureMap dx(dy.batch, in_, dy.dims);
  parallel_for(static_cast<size_t>(dy.batch), [&](size_t n) {
    double* gp = dy_pad.data() + static_cast<int64_t>(n) * padded_grad;
    pad_into(dy.channel(static_cast<int>(n), 0), out_, dy.dims, k_ / 2, gp);
    kernels.conv_forward(tshape, gp, flipped.data(), dx.channel(static_cast<int>(n), 0));
  });
  return dx;
}

void Conv3d::zero_grad() {
  std::fill(grad_weight.begin(), grad_weight.end(), 0.0);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
}

void Conv3d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", {out_, in_, k_, k_, k_}, &weight, &grad_weight});
  if (!bias.empty()) out.push_back({prefix + ".bias", {out_}, &bias, &grad_bias});
}

// ---------------------------------------------------------------------------
// BatchNorm3d

BatchNorm3d::BatchNorm3d(int channels, double momentum_, double eps_)
    : gamma(static_cast<size_t>(channels), 1.0),
      beta(static_cast<size_t>(channels), 0.0),
      running_mean(static_cast<size_t>(channels), 0.0),
      running_var(static_cast<size_t>(channels), 1.0),
      grad_gamma(static_cast<size_t>(channels), 0.0),
      grad_beta(static_cast<size_t>(channels), 0.0),
      momentum(momentum_),
      eps(eps_) {}

FeatureMap BatchNorm3d::forward(const FeatureMap& x, Mode mode) {
  const auto channels = static_cast<int>(gamma.size());
  if (x.channels != channels) throw std::invalid_argument("BatchNorm3d: channel mismatch");
  const int64_t per_sample = x.voxels();
  const double count = static_cast<double>(x.batch) * static_cast<double>(per_sample);
  if (mode == Mode::kTrain && count < 2.0) {
    throw std::invalid_argument("BatchNorm3d: training needs more than one value per channel");
  }
  cached_mode_ = mode;
  xhat_.resize(x.data.size());
  inv_std_.assign(static_cast<size_t>(channels), 0.0);
  FeatureMap y(x.batch, x.channels, x.dims);
  for (int c = 0; c < channels; ++c) {
    const auto cs = static_cast<size_t>(c);
    double mean, var;
    if (mode == Mode::kTrain) {
      double s = 0.0;
      for (int n = 0; n < x.batch; ++n) {
        const double* p = x.channel(n, c);
        for (int64_t i = 0; i < per_sample; ++i) s += p[i];
      }
      mean = s / count;
      double ss = 0.0;
      for (int n = 0; n < x.batch; ++n) {
        const double* p = x.channel(n, c);
        for (int64_t i = 0; i < per_sample; ++i) ss += (p[i] - mean) * (p[i] - mean);
      }
      var = ss / count;
      running_mean[cs] = (1.0 - momentum) * running_mean[cs] + momentum * mean;
      running_var[cs] = (1.0 - momentum) * running_var[cs] + momentum * var * count / (count - 1.0);
    } else {
      mean = running_mean[cs];
      var = running_var[cs];
    }
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std_[cs] = inv;
    for (int n = 0; n < x.batch; ++n) {
      const double* p = x.channel(n, c);
      double* h = xhat_.data() + n * x.sample_stride() + c * per_sample;
      double* o = y.channel(n, c);
      for (int64_t i = 0; i < per_sample; ++i) {
        h[i] = (p[i] - mean) * inv;
        o[i] = gamma[cs] * h[i] + beta[cs];
      }
    }
  }
  return y;
}

FeatureMap BatchNorm3d::backward(const FeatureMap& dy) {
  const auto channels = static_cast<int>(gamma.size());
  if (dy.channels != channels || dy.data.size() != xhat_.size()) {
    throw std::invalid_argument("BatchNorm3d::backward: gradient shape does not match forward input");
  }
  const int64_t per_sample = dy.voxels();
  const double count = static_cast<double>(dy.batch) * static_cast<double>(per_sample);
  FeatureMap dx(dy.batch, dy.channels, dy.dims);
  for (int c = 0; c < channels; ++c) {
    const auto cs = static_cast<size_t>(c);
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < dy.batch; ++n) {
      const double* g = dy.channel(n, c);
      const double* h = xhat_.data() + n * dy.sample_stride() + c * per_sample;
      for (int64_t i = 0; i < per_sample; ++i) {
        sum_dy += g[i];
        sum_dy_xhat += g[i] * h[i];
      }
    }
    grad_gamma[cs] += sum_dy_xhat;
    grad_beta[cs] += sum_dy;
    const double scale = gamma[cs] * inv_std_[cs];
    for (int n = 0; n < dy.batch; ++n) {
      const double* g = dy.channel(n, c);
      const double* h = xhat_.data() + n * dy.sample_stride() + c * per_sample;
      double* o = dx.channel(n, c);
      if (cached_mode_ == Mode::kTrain) {
        for (int64_t i = 0; i < per_sample; ++i) {
          o[i] = scale / count * (count * g[i] - sum_dy - h[i] * sum_dy_xhat);
        }
      } else {
        for (int64_t i = 0; i < per_sample; ++i) o[i] = scale * g[i];
      }
    }
  }
  return dx;
}

void BatchNorm3d::zero_grad() {
  std::fill(grad_gamma.begin(), grad_gamma.end(), 0.0);
  std::fill(grad_beta.begin(), grad_beta.end(), 0.0);
}

void BatchNorm3d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  const auto c = static_cast<int64_t>(gamma.size());
  out.push_back({prefix + ".gamma", {c}, &gamma, &grad_gamma});
  out.push_back({prefix + ".beta", {c}, &beta, &grad_beta});
}

// ---------------------------------------------------------------------------
// ReLU

FeatureMap ReLU::forward(const FeatureMap& x) {
  FeatureMap y = x;
  active_.resize(x.data.size());
  for (size_t i = 0; i < y.data.size(); ++i) {
    active_[i] = y.data[i] > 0.0;
    if (!active_[i]) y.data[i] = 0.0;
  }
  return y;
}

FeatureMap ReLU::backward(const FeatureMap& dy) const {
  if (dy.data.size() != active_.size()) throw std::invalid_argument("ReLU::backward: shape mismatch");
  FeatureMap dx = dy;
  for (size_t i = 0; i < dx.data.size(); ++i) {
    if (!active_[i]) dx.data[i] = 0.0;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// ResidualBlock

ResidualBlock::ResidualBlock(int channels)
    : conv1(channels, channels, 3, false),
      conv2(channels, channels, 3, false),
      bn1(channels),
      bn2(channels) {}

void ResidualBlock::init(Rng& rng) {
  conv1.init(rng);
  conv2.init(rng);
}

FeatureMap ResidualBlock::forward(const FeatureMap& x, Mode mode) {
  if (x.channels != conv1.in_channels()) {
    throw std::invalid_argument("ResidualBlock: input channels must equal block width");
  }
  FeatureMap h = relu1_.forward(bn1.forward(conv1.forward(x), mode));
  FeatureMap u = bn2.forward(conv2.forward(h), mode);
  for (size_t i = 0; i < u.data.size(); ++i) u.data[i] += x.data[i];
  return relu_out_.forward(u);
}

FeatureMap ResidualBlock::backward(const FeatureMap& dy) {
  const FeatureMap du = relu_out_.backward(dy);
  FeatureMap dx = conv1.backward(bn1.backward(relu1_.backward(conv2.backward(bn2.backward(du)))));
  for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += du.data[i];
  return dx;
}

void ResidualBlock::zero_grad() {
  conv1.zero_grad();
  conv2.zero_grad();
  bn1.zero_grad();
  bn2.zero_grad();
}

void ResidualBlock::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  conv1.collect(prefix + ".conv1", out);
  bn1.collect(prefix + ".bn1", out);
  conv2.collect(prefix + ".conv2", out);
  bn2.collect(prefix + ".bn2", out);
}

// ---------------------------------------------------------------------------
// NetworkConfig

void NetworkConfig::validate() const {
  if (in_channels < 1 || trunk_channels < 1 || blocks_per_branch < 1 || semantic_out != 2) {
    throw ConfigError("network: channel and block counts must be >= 1 and semantic_out == 2");
  }
  if (embedding_dims < 2) throw ConfigError("network: embedding_dims must be >= 2");
}

void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = {{"in_channels", c.in_channels},
       {"trunk_channels", c.trunk_channels},
       {"blocks_per_branch", c.blocks_per_branch},
       {"embedding_dims", c.embedding_dims},
       {"semantic_out", c.semantic_out}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c) {
  const NetworkConfig d;
  c.in_channels = j.value("in_channels", d.in_channels);
  c.trunk_channels = j.value("trunk_channels", d.trunk_channels);
  c.blocks_per_branch = j.value("blocks_per_branch", d.blocks_per_branch);
  c.embedding_dims = j.value("embedding_dims", d.embedding_dims);
  c.semantic_out = j.value("semantic_out", d.semantic_out);
}

// ---------------------------------------------------------------------------
// Branch

Branch::Branch(int in_channels, int trunk_channels, int blocks_count, int out_channels)
    : conv_in(in_channels, trunk_channels, 3, false),
      bn_in(trunk_channels),
      head(trunk_channels, out_channels, 1, true) {
  for (int b = 0; b < blocks_count; ++b) blocks.emplace_back(trunk_channels);
}

void Branch::init(Rng& rng) {
  conv_in.init(rng);
  for (auto& b : blocks) b.init(rng);
  init_head(rng);
}

void Branch::init_head(Rng& rng) { head.init(rng, 1.0); }

FeatureMap Branch::forward(const FeatureMap& x, Mode mode) {
  FeatureMap h = relu_in_.forward(bn_in.forward(conv_in.forward(x), mode));
  for (auto& b : blocks) h = b.forward(h, mode);
  return head.forward(h);
}

void Branch::backward(const FeatureMap& dy) {
  FeatureMap g = head.backward(dy);
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) g = it->backward(g);
  conv_in.backward(bn_in.backward(relu_in_.backward(g)), false);
}

FeatureMap Branch::backward_to_input(const FeatureMap& dy) {
  FeatureMap g = head.backward(dy);
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) g = it->backward(g);
  return conv_in.backward(bn_in.backward(relu_in_.backward(g)), true);
}

void Branch::zero_grad() {
  conv_in.zero_grad();
  bn_in.zero_grad();
  for (auto& b : blocks) b.zero_grad();
  head.zero_grad();
}

void Branch::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  conv_in.collect(prefix + ".conv_in", out);
  bn_in.collect(prefix + ".bn_in", out);
  for (size_t b = 0; b < blocks.size(); ++b) blocks[b].collect(prefix + ".blocks." + std::to_string(b), out);
  head.collect(prefix + ".head", out);
}

namespace {

void collect_buffers(Branch& br, const std::string& prefix, std::vector<ParamRef>& out) {
  auto add = [&](BatchNorm3d& bn, const std::string& name) {
    const auto c = static_cast<int64_t>(bn.gamma.size());
    out.push_back({name + ".running_mean", {c}, &bn.running_mean, nullptr});
    out.push_back({name + ".running_var", {c}, &bn.running_var, nullptr});
  };
  add(br.bn_in, prefix + ".bn_in");
  for (size_t b = 0; b < br.blocks.size(); ++b) {
    add(br.blocks[b].bn1, prefix + ".blocks." + std::to_string(b) + ".bn1");
    add(br.blocks[b].bn2, prefix + ".blocks." + std::to_string(b) + ".bn2");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Network

Network::Network(const NetworkConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  semantic = Branch(cfg.in_channels, cfg.trunk_channels, cfg.blocks_per_branch, cfg.semantic_out);
  embedding = Branch(cfg.in_channels, cfg.trunk_channels, cfg.blocks_per_branch, cfg.embedding_dims);
}

void Network::init(Rng& rng) {
  semantic.init(rng);
  embedding.init(rng);
}

std::vector<ParamRef> Network::semantic_params() {
  std::vector<ParamRef> out;
  semantic.collect("semantic", out);
  return out;
}

std::vector<ParamRef> Network::embedding_params() {
  std::vector<ParamRef> out;
  embedding.collect("embedding", out);
  return out;
}

std::vector<ParamRef> Network::all_tensors() {
  std::vector<ParamRef> out;
  semantic.collect("semantic", out);
  collect_buffers(semantic, "semantic", out);
  embedding.collect("embedding", out);
  collect_buffers(embedding, "embedding", out);
  return out;
}

void Network::init_embedding_from_semantic(Rng& rng) {
  std::vector<ParamRef> src, dst;
  semantic.collect("b", src);
  collect_buffers(semantic, "b", src);
  embedding.collect("b", dst);
  collect_buffers(embedding, "b", dst);
  for (auto& d : dst) {
    if (d.name.rfind("b.head.", 0) == 0) continue;
    auto it = std::find_if(src.begin(), src.end(), [&](const ParamRef& s) { return s.name == d.name; });
    if (it == src.end() || it->shape != d.shape) {
      throw CheckpointMismatch("embedding tensor " + d.name + " has no shape-compatible semantic source");
    }
    *d.value = *it->value;
  }
  embedding.init_head(rng);
}

uint64_t checksum_of(const std::vector<ParamRef>& tensors) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tensors) h = fnv1a64(t.value->data(), t.value->size() * sizeof(double), h);
  return h;
}

uint64_t Network::checksum() { return checksum_of(all_tensors()); }

uint64_t Network::semantic_checksum() {
  std::vector<ParamRef> t;
  semantic.collect("semantic", t);
  collect_buffers(semantic, "semantic", t);
  return checksum_of(t);
}

uint64_t Network::embedding_checksum() {
  std::vector<ParamRef> t;
  embedding.collect("embedding", t);
  collect_buffers(embedding, "embedding", t);
  return checksum_of(t);
}

std::vector<double> foreground_probability(const FeatureMap& logits) {
  if (logits.channels != 2) throw std::invalid_argument("semantic logits must have 2 channels");
  std::vector<double> p(static_cast<size_t>(logits.batch * logits.voxels()));
  for (int n = 0; n < logits.batch; ++n) {
    const double* bg = logits.channel(n, 0);
    const double* fg = logits.channel(n, 1);
    for (int64_t i = 0; i < logits.voxels(); ++i) {
      p[static_cast<size_t>(n * logits.voxels() + i)] = 1.0 / (1.0 + std::exp(bg[i] - fg[i]));
    }
  }
  return p;
}

FeatureMap softmax_foreground_backward(const FeatureMap& logits, const std::vector<double>& grad_prob) {
  const auto p = foreground_probability(logits);
  if (grad_prob.size() != p.size()) throw std::invalid_argument("softmax backward: size mismatch");
  FeatureMap d(logits.batch, 2, logits.dims);
  for (int n = 0; n < logits.batch; ++n) {
    double* dbg = d.channel(n, 0);
    double* dfg = d.channel(n, 1);
    for (int64_t i = 0; i < logits.voxels(); ++i) {
      const auto k = static_cast<size_t>(n * logits.voxels() + i);
      const double g = grad_prob[k] * p[k] * (1.0 - p[k]);
      dfg[i] = g;
      dbg[i] = -g;
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Adam

void to_json(nlohmann::json& j, const AdamParams& p) {
  j = {{"lr", p.lr}, {"beta1", p.beta1}, {"beta2", p.beta2}, {"eps", p.eps}};
}

void from_json(const nlohmann::json& j, AdamParams& p) {
  const AdamParams d;
  p.lr = j.value("lr", d.lr);
  p.beta1 = j.value("beta1", d.beta1);
  p.beta2 = j.value("beta2", d.beta2);
  p.eps = j.value("eps", d.eps);
}

void adam_step(AdamState& state, const std::vector<ParamRef>& tensors) {
  if (state.first_moment.empty()) {
    for (const auto& t : tensors) {
      state.first_moment.emplace_back(t.value->size(), 0.0);
      state.second_moment.emplace_back(t.value->size(), 0.0);
    }
  }
  if (state.first_moment.size() != tensors.size()) {
    throw std::invalid_argument("adam_step: moment buffers do not match the parameter list");
  }
  for (const auto& t : tensors) {
    if (t.grad == nullptr || t.grad->size() != t.value->size()) {
      throw std::invalid_argument("adam_step: " + t.name + " has no matching gradient");
    }
    for (double g : *t.grad) {
      if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient in " + t.name);
    }
  }
  const auto& p = state.params;
  ++state.step;
  const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(state.step));
  for (size_t k = 0; k < tensors.size(); ++k) {
    auto& value = *tensors[k].value;
    const auto& grad = *tensors[k].grad;
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (size_t i = 0; i < value.size(); ++i) {
      m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * grad[i];
      v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * grad[i] * grad[i];
      value[i] -= p.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + p.eps);
    }
  }
}

}  // namespace fiberseg::nn
