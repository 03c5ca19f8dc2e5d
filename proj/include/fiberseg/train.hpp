#pragma once

// Two-stage training: semantic branch on BCE, then the embedding branch
// (initialised from the semantic trunk) on the discriminative loss with the
// semantic branch frozen.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fiberseg/losses.hpp"
#include "fiberseg/nn.hpp"
#include "fiberseg/random.hpp"
#include "fiberseg/volume.hpp"

namespace fiberseg::train {

struct TrainConfig {
  int iterations_semantic = 2000;
  int iterations_embedding = 2000;
  int batch_size = 4;
  int tile_size = 32;
  uint64_t seed = 1234;
  bool augment = true;  // random cube isometry per sample
  losses::EmbeddingLossParams loss;
  nn::AdamParams adam;
  int log_every = 100;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainingSample {
  Coord corner;
  CubeIsometry isometry;
  ScalarVolume raw;
  LabelVolume gt;
  MaskVolume mask;
};

/// Uniformly random tile corner, then one isometry applied to raw, gt and mask alike.
TrainingSample sample_training_tile(const ScalarVolume& volume, const LabelVolume& gt, int64_t tile_size,
                                    bool augment, Rng& rng);

struct LossRecord {
  int iteration = 0;  // 1-based
  double loss = 0.0;
  double variance = 0.0;
  double distance = 0.0;
  double regularization = 0.0;
};

struct StageLog {
  std::string stage;
  std::vector<LossRecord> records;  // one per iteration
};

/// Rows for iteration 1 and every `every`-th iteration, with the mean loss since the previous row.
void write_loss_csv(const std::filesystem::path& path, const StageLog& log, int every);

/// Runs `iterations` semantic steps on `net` in place. `volume` must already be normalised.
StageLog train_semantic(nn::Network& net, const ScalarVolume& volume, const MaskVolume& mask,
                        const TrainConfig& cfg, int iterations);

/// Fresh network initialised from cfg.seed, then cfg.iterations_semantic steps.
nn::Network train_semantic(const nn::NetworkConfig& net_cfg, const ScalarVolume& volume, const MaskVolume& mask,
                           const TrainConfig& cfg, StageLog* log = nullptr);

/// Runs `iterations` embedding steps on `net` in place; the semantic branch is not touched.
/// With `init_from_semantic` the embedding trunk is first copied from the semantic trunk.
StageLog train_embedding(nn::Network& net, const ScalarVolume& volume, const LabelVolume& gt,
                         const TrainConfig& cfg, int iterations, bool init_from_semantic);

/// The embedding loss of one batch of network outputs, restricted to gt foreground voxels
/// and averaged over samples that contain foreground. Gradient written to `grad` when non-null.
losses::EmbeddingLossResult batch_embedding_loss(const nn::FeatureMap& embedding,
                                                 const std::vector<const LabelVolume*>& gt,
                                                 const losses::EmbeddingLossParams& params,
                                                 nn::FeatureMap* grad);

}  // namespace fiberseg::train
