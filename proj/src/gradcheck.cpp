#include "fiberseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "fiberseg/losses.hpp"
#include "fiberseg/nn.hpp"
#include "fiberseg/random.hpp"
#include "fiberseg/train.hpp"

namespace fiberseg::gradcheck {

namespace {

constexpr double kLossTolerance = 1e-6;
constexpr double kNetworkTolerance = 1e-4;

using Objective = std::function<double()>;
using Response = std::function<std::vector<double>()>;

// Compares `analytic` against central differences of `f` over `values`.
void compare(OpResult& r, const std::string& tensor, std::vector<double>& values, const std::vector<double>& analytic,
             const Objective& f, double h) {
  for (size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + h;
    const double up = f();
    values[i] = keep - h;
    const double down = f();
    values[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double err = relative_error(analytic[i], numeric);
    ++r.checked;
    if (err > r.max_rel_error || r.worst.empty()) {
      r.max_rel_error = err;
      r.worst = tensor + "[" + std::to_string(i) + "]";
    }
  }
}

// Layer variant: the objective is <probe, response>, and the two perturbed
// responses are subtracted elementwise before the reduction so that
// cancellation does not swamp small entries.
void compare_response(OpResult& r, const std::string& tensor, std::vector<double>& values,
                      const std::vector<double>& analytic, const std::vector<double>& probe, const Response& f,
                      double h) {
  for (size_t i = 0; i < values.size(); ++i) {
    const double keep = values[i];
    values[i] = keep + h;
    const std::vector<double> up = f();
    values[i] = keep - h;
    const std::vector<double> down = f();
    values[i] = keep;
    double diff = 0.0;
    for (size_t k = 0; k < up.size(); ++k) diff += probe[k] * (up[k] - down[k]);
    const double err = relative_error(analytic[i], diff / (2.0 * h));
    ++r.checked;
    if (err > r.max_rel_error || r.worst.empty()) {
      r.max_rel_error = err;
      r.worst = tensor + "[" + std::to_string(i) + "]";
    }
  }
}

void maybe_corrupt(const Options& opts, const std::string& op, std::vector<double>& grad) {
  if (grad.empty() || (opts.corrupt != op && opts.corrupt != "all")) return;
  const auto it = std::max_element(grad.begin(), grad.end(),
                                   [](double a, double b) { return std::abs(a) < std::abs(b); });
  *it += 0.01 * std::abs(*it) + 1e-3;
}

losses::MaskedEmbeddingBatch random_embeddings(Rng& rng, int dim, int clusters, int per_cluster) {
  losses::MaskedEmbeddingBatch b;
  b.dim = dim;
  std::vector<double> centres(static_cast<size_t>(clusters * dim));
  for (double& c : centres) c = rng.uniform(-1.0, 1.0);
  for (int p = 0; p < per_cluster; ++p) {
    for (int c = 0; c < clusters; ++c) {
      b.instance.push_back(static_cast<uint32_t>(10 + 3 * c));
      for (int d = 0; d < dim; ++d) b.embeddings.push_back(centres[static_cast<size_t>(c * dim + d)] + rng.normal(0.0, 0.3));
    }
  }
  return b;
}

OpResult check_bce(const Options& opts) {
  OpResult r{"bce", 0.0, kLossTolerance, 0, {}};
  Rng rng(opts.seed);
  std::vector<double> y_hat(64), y(64);
  for (size_t i = 0; i < y.size(); ++i) {
    y_hat[i] = rng.uniform(0.05, 0.95);
    y[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
  }
  auto g = losses::bce_loss(y_hat, y).grad;
  maybe_corrupt(opts, r.op, g);
  compare(r, "y_hat", y_hat, g, [&] { return losses::bce_loss(y_hat, y).loss; }, opts.h);
  return r;
}

OpResult check_embedding_term(const Options& opts, const std::string& op, double a, double b, double c) {
  OpResult r{op, 0.0, kLossTolerance, 0, {}};
  Rng rng(opts.seed + 1);
  losses::EmbeddingLossParams p;
  p.alpha = a;
  p.beta = b;
  p.gamma = c;
  auto batch = random_embeddings(rng, 4, 3, 12);
  auto g = losses::embedding_loss(batch, p).grad;
  maybe_corrupt(opts, op, g);
  compare(r, "x", batch.embeddings, g, [&] { return losses::embedding_loss(batch, p).total; }, opts.h);
  return r;
}

nn::FeatureMap random_map(Rng& rng, int batch, int channels, Dims dims) {
  nn::FeatureMap m(batch, channels, dims);
  for (double& v : m.data) v = rng.normal();
  return m;
}

// Checks every parameter gradient and the input gradient of a layer whose
// loss is <r, forward(x)>.
template <typename Layer, typename Forward, typename Backward>
OpResult check_layer(const Options& opts, const std::string& op, double tolerance, Layer& layer, nn::FeatureMap x,
                     Forward forward, Backward backward) {
  OpResult r{op, 0.0, tolerance, 0, {}};
  Rng rng(opts.seed + 17);
  const nn::FeatureMap probe = random_map(rng, x.batch, forward(layer, x).channels, x.dims);
  const Response response = [&] { return forward(layer, x).data; };

  layer.zero_grad();
  forward(layer, x);
  nn::FeatureMap dx = backward(layer, probe);
  std::vector<nn::ParamRef> params;
  layer.collect(op, params);
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.push_back(*p.grad);
  for (auto& g : analytic) maybe_corrupt(opts, op, g);
  maybe_corrupt(opts, op, dx.data);

  for (size_t i = 0; i < params.size(); ++i) {
    compare_response(r, params[i].name, *params[i].value, analytic[i], probe.data, response, opts.h);
  }
  compare_response(r, "input", x.data, dx.data, probe.data, response, opts.h);
  return r;
}

OpResult check_conv(const Options& opts, int kernel, bool bias, const std::string& op) {
  Rng rng(opts.seed + 3);
  nn::Conv3d conv(3, 4, kernel, bias);
  conv.init(rng);
  for (double& b : conv.bias) b = rng.normal();
  return check_layer(
      opts, op, kLossTolerance, conv, random_map(rng, 2, 3, {4, 5, 6}),
      [](nn::Conv3d& l, const nn::FeatureMap& x) { return l.forward(x); },
      [](nn::Conv3d& l, const nn::FeatureMap& dy) { return l.backward(dy, true); });
}

OpResult check_batchnorm(const Options& opts) {
  Rng rng(opts.seed + 5);
  nn::BatchNorm3d bn(3);
  for (double& g : bn.gamma) g = rng.uniform(0.5, 1.5);
  for (double& b : bn.beta) b = rng.normal();
  nn::FeatureMap x = random_map(rng, 2, 3, {3, 4, 5});
  for (double& v : x.data) v = 2.0 * v + 0.5;
  return check_layer(
      opts, "batchnorm", kLossTolerance, bn, x,
      [](nn::BatchNorm3d& l, const nn::FeatureMap& in) { return l.forward(in, nn::Mode::kTrain); },
      [](nn::BatchNorm3d& l, const nn::FeatureMap& dy) { return l.backward(dy); });
}

OpResult check_residual(const Options& opts) {
  Rng rng(opts.seed + 9);
  nn::ResidualBlock block(3);
  block.init(rng);
  return check_layer(
      opts, "residual_block", kNetworkTolerance, block, random_map(rng, 2, 3, {4, 4, 4}),
      [](nn::ResidualBlock& l, const nn::FeatureMap& in) { return l.forward(in, nn::Mode::kTrain); },
      [](nn::ResidualBlock& l, const nn::FeatureMap& dy) { return l.backward(dy); });
}

// Full objective of both branches on one 8^3 tile: BCE of the foreground
// probability plus the embedding loss over the labelled voxels.
OpResult check_network(const Options& opts) {
  OpResult r{"network", 0.0, kNetworkTolerance, 0, {}};
  Rng rng(opts.seed + 11);
  nn::NetworkConfig cfg;
  cfg.trunk_channels = 4;
  cfg.blocks_per_branch = 1;
  cfg.embedding_dims = 3;
  nn::Network net(cfg);
  net.init(rng);

  const Dims d = Dims::cube(8);
  ScalarVolume raw(d);
  LabelVolume gt(d);
  std::vector<double> target(static_cast<size_t>(d.size()));
  for (size_t i = 0; i < raw.size(); ++i) {
    const auto c = raw.coord(i);
    const uint32_t id = (c.x + c.y) % 5 == 0 ? 0u : static_cast<uint32_t>(1 + (c.x + 2 * c.z) / 6);
    gt[i] = id;
    target[i] = id ? 1.0 : 0.0;
    raw[i] = static_cast<float>((id ? 1.0 : 0.0) + rng.normal(0.0, 0.3));
  }
  const nn::FeatureMap x = nn::stack_tiles({&raw});
  const std::vector<const LabelVolume*> gts{&gt};
  const losses::EmbeddingLossParams lp;

  const auto objective = [&] {
    const auto p = nn::foreground_probability(net.semantic.forward(x, nn::Mode::kTrain));
    const auto e = net.embedding.forward(x, nn::Mode::kTrain);
    return losses::bce_loss(p, target).loss + train::batch_embedding_loss(e, gts, lp, nullptr).total;
  };

  net.semantic.zero_grad();
  net.embedding.zero_grad();
  const nn::FeatureMap logits = net.semantic.forward(x, nn::Mode::kTrain);
  const auto bce = losses::bce_loss(nn::foreground_probability(logits), target);
  net.semantic.backward(nn::softmax_foreground_backward(logits, bce.grad));
  const nn::FeatureMap emb = net.embedding.forward(x, nn::Mode::kTrain);
  nn::FeatureMap demb;
  train::batch_embedding_loss(emb, gts, lp, &demb);
  net.embedding.backward(demb);

  auto params = net.semantic_params();
  for (auto& p : net.embedding_params()) params.push_back(p);
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.push_back(*p.grad);
  for (auto& g : analytic) maybe_corrupt(opts, r.op, g);
  for (size_t i = 0; i < params.size(); ++i) compare(r, params[i].name, *params[i].value, analytic[i], objective, opts.h);
  return r;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

std::vector<OpResult> run_all(const Options& opts) {
  std::vector<OpResult> out;
  out.push_back(check_bce(opts));
  out.push_back(check_embedding_term(opts, "variance", 1.0, 0.0, 0.0));
  out.push_back(check_embedding_term(opts, "distance", 0.0, 1.0, 0.0));
  out.push_back(check_embedding_term(opts, "regularization", 0.0, 0.0, 1.0));
  out.push_back(check_embedding_term(opts, "embedding_loss", 1.0, 1.0, 0.001));
  out.push_back(check_conv(opts, 3, false, "conv3d"));
  out.push_back(check_conv(opts, 1, true, "conv3d_1x1_bias"));
  out.push_back(check_batchnorm(opts));
  out.push_back(check_residual(opts));
  out.push_back(check_network(opts));
  return out;
}

nlohmann::json to_json(const std::vector<OpResult>& results) {
  nlohmann::json ops = nlohmann::json::array();
  bool ok = true;
  for (const auto& r : results) {
    ops.push_back({{"op", r.op},
                   {"max_rel_error", r.max_rel_error},
                   {"threshold", r.threshold},
                   {"checked", r.checked},
                   {"worst", r.worst},
                   {"passed", r.passed()}});
    ok = ok && r.passed();
  }
  return {{"passed", ok}, {"ops", ops}};
}

}  // namespace fiberseg::gradcheck
