#pragma once

// End-to-end plumbing shared by the CLI and the acceptance suite: one JSON
// config for every stage, tiled prediction (embedding or baseline), the
// four-row comparison and the full synthetic benchmark.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fiberseg/baseline.hpp"
#include "fiberseg/cluster.hpp"
#include "fiberseg/metrics.hpp"
#include "fiberseg/nn.hpp"
#include "fiberseg/phantom.hpp"
#include "fiberseg/postprocess.hpp"
#include "fiberseg/train.hpp"
#include "fiberseg/volume.hpp"

namespace fiberseg {

struct PipelineConfig {
  PhantomConfig phantom;              // evaluation phantom
  uint64_t train_phantom_seed = 4242; // training phantom: same generator, this seed
  nn::NetworkConfig network;
  train::TrainConfig train;
  int64_t tile_size = 32;
  int64_t overlap = 16;
  double semantic_threshold = 0.5;
  double baseline_intensity_threshold = 0.5;  // on the normalised raw, when no network is available
  cluster::DbscanParams dbscan;
  postprocess::MergeParams merge;
  baseline::StructuringElement structuring_element;
  baseline::Connectivity connectivity = baseline::Connectivity::k26;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

/// Parses and validates; FormatError-free: every failure is a ConfigError.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const nlohmann::json& j);

/// Hex FNV-1a of the canonical JSON dump.
std::string config_hash(const PipelineConfig& c);

enum class Method { kEmbedding, kBaseline };

std::string method_name(Method m, bool true_semantic);

struct PredictOptions {
  Method method = Method::kEmbedding;
  /// Replaces the thresholded semantic prediction (the "+true semantic" setups).
  const MaskVolume* semantic_override = nullptr;
  bool keep_embeddings = false;
  /// Rethrow UnsegmentableTile instead of labelling the tile by connected components.
  bool strict = false;
};

struct TileClusters {
  Coord origin;
  cluster::EmbeddedPointSet points;
  std::vector<uint32_t> labels;
};

struct Prediction {
  TilePlan plan;
  ScalarVolume probability;  // tile-averaged foreground probability; empty without a network
  MaskVolume semantic_mask;
  std::vector<postprocess::InstanceTile> tiles;
  postprocess::MergeResult merged;
  std::vector<size_t> fallback_tiles;  // tiles labelled by connected components instead
  std::vector<TileClusters> embeddings;
};

/// `raw` is the unnormalised input. `net` may be null only for the baseline with an override
/// mask or with the intensity threshold.
Prediction run_predict(const PipelineConfig& cfg, const nn::Network* net, const ScalarVolume& raw,
                       const PredictOptions& opts);

metrics::EvaluationReport evaluate_prediction(const PipelineConfig& cfg, const Prediction& p, const LabelVolume& gt,
                                              Method method, bool true_semantic);

/// Four rows: embedding, embedding + true semantic, baseline, baseline + true semantic.
std::vector<metrics::EvaluationReport> run_compare(const PipelineConfig& cfg, const nn::Network& net,
                                                   const ScalarVolume& raw, const LabelVolume& gt);

nlohmann::json compare_json(const std::vector<metrics::EvaluationReport>& rows);

struct TrainedModel {
  nn::Network network;
  train::StageLog semantic_log;
  train::StageLog embedding_log;
  uint64_t semantic_stage_checksum = 0;  // whole network after stage 1
};

/// Both stages on the training phantom.
TrainedModel train_model(const PipelineConfig& cfg);

struct BenchmarkResult {
  TrainedModel model;
  std::vector<metrics::EvaluationReport> rows;
  LabelVolume embedding_labels;
  LabelVolume baseline_labels;
  double seconds = 0.0;
};

BenchmarkResult run_benchmark(const PipelineConfig& cfg);

}  // namespace fiberseg
