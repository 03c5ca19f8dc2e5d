#pragma once

// Resolution-preserving 3D FCN built from scratch: same-padded convolutions,
// batch normalisation, ReLU, residual blocks, a two-branch network
// (semantic + embedding) with hand-written backward passes, and Adam.
// All arithmetic is in double precision.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fiberseg/random.hpp"
#include "fiberseg/volume.hpp"

namespace fiberseg::nn {

/// Batch of multi-channel volumes, layout (batch, channel, z, y, x).
struct FeatureMap {
  int batch = 1;
  int channels = 0;
  Dims dims;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int batch, int channels, Dims dims, double fill = 0.0);

  int64_t voxels() const { return dims.size(); }
  int64_t sample_stride() const { return channels * voxels(); }
  double* channel(int n, int c) { return data.data() + n * sample_stride() + c * voxels(); }
  const double* channel(int n, int c) const {
    return data.data() + n * sample_stride() + c * voxels();
  }
  bool same_shape(const FeatureMap& o) const {
    return batch == o.batch && channels == o.channels && dims == o.dims;
  }
};

/// Single-channel batch from normalised tiles (all of the same dims).
FeatureMap stack_tiles(const std::vector<const ScalarVolume*>& tiles);

enum class Mode { kTrain, kEval };

/// Named view of a trainable tensor and its gradient accumulator.
struct ParamRef {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<double>* value = nullptr;
  std::vector<double>* grad = nullptr;  // nullptr for non-trainable buffers
};

class Conv3d {
 public:
  Conv3d() = default;
  Conv3d(int in_channels, int out_channels, int kernel, bool with_bias);

  void init(Rng& rng, double gain = 2.0);
  FeatureMap forward(const FeatureMap& x);
  /// Accumulates weight/bias gradients; returns dL/dx when `need_input_grad`.
  FeatureMap backward(const FeatureMap& dy, bool need_input_grad = true);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }

  std::vector<double> weight;  // (out, in, k, k, k)
  std::vector<double> bias;    // (out) or empty
  std::vector<double> grad_weight;
  std::vector<double> grad_bias;

 private:
  int in_ = 0;
  int out_ = 0;
  int k_ = 3;
  int cached_batch_ = 0;
  Dims cached_dims_;
  std::vector<double> padded_input_;
};

class BatchNorm3d {
 public:
  BatchNorm3d() = default;
  explicit BatchNorm3d(int channels, double momentum = 0.1, double eps = 1e-5);

  FeatureMap forward(const FeatureMap& x, Mode mode);
  FeatureMap backward(const FeatureMap& dy);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  std::vector<double> gamma, beta;
  std::vector<double> running_mean, running_var;
  std::vector<double> grad_gamma, grad_beta;
  double momentum = 0.1;
  double eps = 1e-5;

 private:
  Mode cached_mode_ = Mode::kTrain;
  std::vector<double> xhat_;
  std::vector<double> inv_std_;
};

class ReLU {
 public:
  FeatureMap forward(const FeatureMap& x);
  FeatureMap backward(const FeatureMap& dy) const;

 private:
  std::vector<uint8_t> active_;
};

/// conv -> BN -> ReLU -> conv -> BN, add the identity skip, ReLU.
class ResidualBlock {
 public:
  ResidualBlock() = default;
  explicit ResidualBlock(int channels);

  void init(Rng& rng);
  FeatureMap forward(const FeatureMap& x, Mode mode);
  FeatureMap backward(const FeatureMap& dy);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  Conv3d conv1, conv2;
  BatchNorm3d bn1, bn2;

 private:
  ReLU relu1_, relu_out_;
};

struct NetworkConfig {
  int in_channels = 1;
  int trunk_channels = 16;
  int blocks_per_branch = 3;
  int embedding_dims = 16;
  int semantic_out = 2;

  void validate() const;
  bool operator==(const NetworkConfig&) const = default;
};

void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);

/// Input conv (k=3) -> BN -> ReLU -> residual blocks -> 1x1 head with bias.
class Branch {
 public:
  Branch() = default;
  Branch(int in_channels, int trunk_channels, int blocks, int out_channels);

  void init(Rng& rng);
  void init_head(Rng& rng);
  FeatureMap forward(const FeatureMap& x, Mode mode);
  /// Backpropagates from the head output; the input gradient is discarded.
  void backward(const FeatureMap& dy);
  FeatureMap backward_to_input(const FeatureMap& dy);
  void zero_grad();
  void collect(const std::string& prefix, std::vector<ParamRef>& out);

  Conv3d conv_in;
  BatchNorm3d bn_in;
  std::vector<ResidualBlock> blocks;
  Conv3d head;

 private:
  ReLU relu_in_;
};

/// Two independent sub-networks sharing the input: semantic (2 logits per
/// voxel) and embedding (D coordinates per voxel).
class Network {
 public:
  Network() = default;
  explicit Network(const NetworkConfig& cfg);

  void init(Rng& rng);
  const NetworkConfig& config() const { return cfg_; }

  Branch semantic;
  Branch embedding;

  std::vector<ParamRef> semantic_params();
  std::vector<ParamRef> embedding_params();
  /// Parameters and running statistics of both branches.
  std::vector<ParamRef> all_tensors();

  /// Copies every semantic trunk tensor (not the head) into the embedding
  /// branch and re-initialises the embedding head.
  void init_embedding_from_semantic(Rng& rng);

  uint64_t checksum();
  uint64_t semantic_checksum();
  uint64_t embedding_checksum();

 private:
  NetworkConfig cfg_;
};

uint64_t checksum_of(const std::vector<ParamRef>& tensors);

/// Foreground probability: channel 1 of a softmax over the two semantic logits.
std::vector<double> foreground_probability(const FeatureMap& logits);

/// Chains dL/d(p_fg) back through the 2-way softmax to the logits.
FeatureMap softmax_foreground_backward(const FeatureMap& logits, const std::vector<double>& grad_prob);

// ---------------------------------------------------------------------------

struct AdamParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void to_json(nlohmann::json& j, const AdamParams& p);
void from_json(const nlohmann::json& j, AdamParams& p);

struct AdamState {
  AdamParams params;
  int64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update over `tensors` (value -= lr * mhat / (sqrt(vhat) + eps)).
/// Throws NonFiniteGradient, leaving values untouched, if any gradient is NaN/inf.
void adam_step(AdamState& state, const std::vector<ParamRef>& tensors);

}  // namespace fiberseg::nn
