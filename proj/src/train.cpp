#include "fiberseg/train.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "fiberseg/errors.hpp"

namespace fiberseg::train {

void TrainConfig::validate() const {
  if (iterations_semantic < 1 || iterations_embedding < 1) throw ConfigError("train: iterations must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (tile_size < 2) throw ConfigError("train: tile_size must be >= 2");
  if (log_every < 1) throw ConfigError("train: log_every must be >= 1");
  if (!(adam.lr > 0.0) || !(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.eps > 0.0)) {
    throw ConfigError("train: invalid adam parameters");
  }
  loss.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"iterations_semantic", c.iterations_semantic},
       {"iterations_embedding", c.iterations_embedding},
       {"batch_size", c.batch_size},
       {"tile_size", c.tile_size},
       {"seed", c.seed},
       {"augment", c.augment},
       {"loss", c.loss},
       {"adam", c.adam},
       {"log_every", c.log_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.iterations_semantic = j.value("iterations_semantic", c.iterations_semantic);
  c.iterations_embedding = j.value("iterations_embedding", c.iterations_embedding);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.tile_size = j.value("tile_size", c.tile_size);
  c.seed = j.value("seed", c.seed);
  c.augment = j.value("augment", c.augment);
  if (j.contains("loss")) c.loss = j.at("loss").get<losses::EmbeddingLossParams>();
  if (j.contains("adam")) c.adam = j.at("adam").get<nn::AdamParams>();
  c.log_every = j.value("log_every", c.log_every);
}

TrainingSample sample_training_tile(const ScalarVolume& volume, const LabelVolume& gt, int64_t tile_size,
                                    bool augment, Rng& rng) {
  const Dims& d = volume.dims();
  if (gt.dims() != d) throw std::invalid_argument("sample_training_tile: volume and gt dims differ");
  if (d.depth < tile_size || d.height < tile_size || d.width < tile_size) {
    throw std::invalid_argument("sample_training_tile: volume smaller than tile");
  }
  TrainingSample s;
  s.corner.z = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(d.depth - tile_size + 1)));
  s.corner.y = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(d.height - tile_size + 1)));
  s.corner.x = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(d.width - tile_size + 1)));
  if (augment) s.isometry = draw_isometry(rng);
  const Dims size = Dims::cube(tile_size);
  s.raw = apply_isometry(crop(volume, s.corner, size), s.isometry);
  s.gt = apply_isometry(crop(gt, s.corner, size), s.isometry);
  s.mask = foreground_of(s.gt);
  return s;
}

void write_loss_csv(const std::filesystem::path& path, const StageLog& log, int every) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "stage,iteration,loss,window_mean,variance,distance,regularization\n";
  out.precision(10);
  double window = 0.0;
  int in_window = 0;
  for (const auto& r : log.records) {
    window += r.loss;
    ++in_window;
    if (r.iteration == 1 || r.iteration % every == 0 ||
        r.iteration == log.records.back().iteration) {
      out << log.stage << ',' << r.iteration << ',' << r.loss << ',' << window / in_window << ','
          << r.variance << ',' << r.distance << ',' << r.regularization << '\n';
      window = 0.0;
      in_window = 0;
    }
  }
}

namespace {

void check_finite(double loss, const std::string& stage, int iteration) {
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << stage << ": non-finite loss at iteration " << iteration;
    throw NonFiniteGradient(msg.str());
  }
}

LabelVolume mask_as_labels(const MaskVolume& mask) {
  LabelVolume out(mask.dims());
  for (size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] ? 1u : 0u;
  return out;
}

}  // namespace

StageLog train_semantic(nn::Network& net, const ScalarVolume& volume, const MaskVolume& mask,
                        const TrainConfig& cfg, int iterations) {
  if (mask.dims() != volume.dims()) throw std::invalid_argument("train_semantic: volume and mask dims differ");
  StageLog log{"semantic", {}};
  const LabelVolume labels = mask_as_labels(mask);
  Rng rng = Rng(cfg.seed).split(0x73656d);
  nn::AdamState adam{cfg.adam, 0, {}, {}};
  const auto params = net.semantic_params();

  for (int it = 1; it <= iterations; ++it) {
    std::vector<TrainingSample> samples;
    for (int b = 0; b < cfg.batch_size; ++b) {
      samples.push_back(sample_training_tile(volume, labels, cfg.tile_size, cfg.augment, rng));
    }
    std::vector<const ScalarVolume*> raws;
    std::vector<double> target;
    for (const auto& s : samples) {
      raws.push_back(&s.raw);
      for (uint8_t m : s.mask.data()) target.push_back(m ? 1.0 : 0.0);
    }
    const nn::FeatureMap x = nn::stack_tiles(raws);
    net.semantic.zero_grad();
    const nn::FeatureMap logits = net.semantic.forward(x, nn::Mode::kTrain);
    const std::vector<double> prob = nn::foreground_probability(logits);
    const losses::BceResult bce = losses::bce_loss(prob, target);
    check_finite(bce.loss, "semantic", it);
    net.semantic.backward(nn::softmax_foreground_backward(logits, bce.grad));
    nn::adam_step(adam, params);
    log.records.push_back({it, bce.loss, 0.0, 0.0, 0.0});
  }
  return log;
}

nn::Network train_semantic(const nn::NetworkConfig& net_cfg, const ScalarVolume& volume, const MaskVolume& mask,
                           const TrainConfig& cfg, StageLog* log) {
  nn::Network net(net_cfg);
  Rng init = Rng(cfg.seed).split(0x696e6974);
  net.init(init);
  StageLog l = train_semantic(net, volume, mask, cfg, cfg.iterations_semantic);
  if (log) *log = std::move(l);
  return net;
}

losses::EmbeddingLossResult batch_embedding_loss(const nn::FeatureMap& embedding,
                                                 const std::vector<const LabelVolume*>& gt,
                                                 const losses::EmbeddingLossParams& params,
                                                 nn::FeatureMap* grad) {
  if (static_cast<int>(gt.size()) != embedding.batch) {
    throw std::invalid_argument("batch_embedding_loss: one gt tile per sample required");
  }
  if (grad) *grad = nn::FeatureMap(embedding.batch, embedding.channels, embedding.dims, 0.0);
  const int D = embedding.channels;
  const int64_t V = embedding.voxels();

  std::vector<losses::EmbeddingLossResult> per_sample;
  std::vector<std::vector<int64_t>> voxels;
  for (int n = 0; n < embedding.batch; ++n) {
    const LabelVolume& g = *gt[static_cast<size_t>(n)];
    if (g.dims() != embedding.dims) throw std::invalid_argument("batch_embedding_loss: gt dims mismatch");
    losses::MaskedEmbeddingBatch b;
    b.dim = D;
    std::vector<int64_t> idx;
    for (int64_t v = 0; v < V; ++v) {
      if (g[static_cast<size_t>(v)] == kBackground) continue;
      idx.push_back(v);
      b.instance.push_back(g[static_cast<size_t>(v)]);
      for (int c = 0; c < D; ++c) b.embeddings.push_back(embedding.channel(n, c)[v]);
    }
    per_sample.push_back(idx.empty() ? losses::EmbeddingLossResult{} : losses::embedding_loss(b, params));
    voxels.push_back(std::move(idx));
  }

  size_t used = 0;
  for (const auto& v : voxels) used += v.empty() ? 0 : 1;
  losses::EmbeddingLossResult total;
  if (used == 0) return total;
  const double w = 1.0 / static_cast<double>(used);
  for (int n = 0; n < embedding.batch; ++n) {
    const auto& r = per_sample[static_cast<size_t>(n)];
    const auto& idx = voxels[static_cast<size_t>(n)];
    if (idx.empty()) continue;
    total.total += w * r.total;
    total.variance += w * r.variance;
    total.distance += w * r.distance;
    total.regularization += w * r.regularization;
    total.clusters += r.clusters;
    if (grad) {
      for (size_t i = 0; i < idx.size(); ++i) {
        for (int c = 0; c < D; ++c) grad->channel(n, c)[idx[i]] = w * r.grad[i * static_cast<size_t>(D) + c];
      }
    }
  }
  return total;
}

StageLog train_embedding(nn::Network& net, const ScalarVolume& volume, const LabelVolume& gt,
                         const TrainConfig& cfg, int iterations, bool init_from_semantic) {
  if (gt.dims() != volume.dims()) throw std::invalid_argument("train_embedding: volume and gt dims differ");
  StageLog log{"embedding", {}};
  Rng rng = Rng(cfg.seed).split(0x656d62);
  if (init_from_semantic) {
    Rng head = Rng(cfg.seed).split(0x68656164);
    net.init_embedding_from_semantic(head);
  }
  nn::AdamState adam{cfg.adam, 0, {}, {}};
  const auto params = net.embedding_params();

  for (int it = 1; it <= iterations; ++it) {
    std::vector<TrainingSample> samples;
    for (int b = 0; b < cfg.batch_size; ++b) {
      samples.push_back(sample_training_tile(volume, gt, cfg.tile_size, cfg.augment, rng));
    }
    std::vector<const ScalarVolume*> raws;
    std::vector<const LabelVolume*> gts;
    for (const auto& s : samples) {
      raws.push_back(&s.raw);
      gts.push_back(&s.gt);
    }
    const nn::FeatureMap x = nn::stack_tiles(raws);
    net.embedding.zero_grad();
    const nn::FeatureMap emb = net.embedding.forward(x, nn::Mode::kTrain);
    nn::FeatureMap grad;
    const auto loss = batch_embedding_loss(emb, gts, cfg.loss, &grad);
    check_finite(loss.total, "embedding", it);
    net.embedding.backward(grad);
    nn::adam_step(adam, params);
    log.records.push_back({it, loss.total, loss.variance, loss.distance, loss.regularization});
  }
  return log;
}

}  // namespace fiberseg::train
