#include "fiberseg/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>

#include "fiberseg/errors.hpp"
#include "fiberseg/parallel.hpp"

namespace fiberseg {

void PipelineConfig::validate() const {
  try {
    phantom.validate();
    network.validate();
    train.validate();
    dbscan.validate();
    merge.validate();
    structuring_element.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (tile_size < 2) throw ConfigError("tile_size must be >= 2");
  if (overlap < 0 || overlap >= tile_size) throw ConfigError("overlap must be in [0, tile_size)");
  if (train.tile_size > phantom.dims.depth || train.tile_size > phantom.dims.height ||
      train.tile_size > phantom.dims.width) {
    throw ConfigError("train.tile_size does not fit in the phantom");
  }
  if (tile_size > phantom.dims.depth || tile_size > phantom.dims.height || tile_size > phantom.dims.width) {
    throw ConfigError("tile_size does not fit in the phantom");
  }
  if (!(semantic_threshold > 0.0 && semantic_threshold < 1.0)) {
    throw ConfigError("semantic_threshold must be in (0, 1)");
  }
  if (connectivity != baseline::Connectivity::k6 && connectivity != baseline::Connectivity::k26) {
    throw ConfigError("connectivity must be 6 or 26");
  }
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"phantom", c.phantom},
       {"train_phantom_seed", c.train_phantom_seed},
       {"network", c.network},
       {"train", c.train},
       {"tile_size", c.tile_size},
       {"overlap", c.overlap},
       {"semantic_threshold", c.semantic_threshold},
       {"baseline_intensity_threshold", c.baseline_intensity_threshold},
       {"dbscan", c.dbscan},
       {"merge", c.merge},
       {"structuring_element", c.structuring_element},
       {"connectivity", static_cast<int>(c.connectivity)}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  c = PipelineConfig{};
  if (j.contains("phantom")) c.phantom = j.at("phantom").get<PhantomConfig>();
  c.train_phantom_seed = j.value("train_phantom_seed", c.train_phantom_seed);
  if (j.contains("network")) c.network = j.at("network").get<nn::NetworkConfig>();
  if (j.contains("train")) c.train = j.at("train").get<train::TrainConfig>();
  c.tile_size = j.value("tile_size", c.tile_size);
  c.overlap = j.value("overlap", c.overlap);
  c.semantic_threshold = j.value("semantic_threshold", c.semantic_threshold);
  c.baseline_intensity_threshold = j.value("baseline_intensity_threshold", c.baseline_intensity_threshold);
  if (j.contains("dbscan")) c.dbscan = j.at("dbscan").get<cluster::DbscanParams>();
  if (j.contains("merge")) c.merge = j.at("merge").get<postprocess::MergeParams>();
  if (j.contains("structuring_element")) {
    c.structuring_element = j.at("structuring_element").get<baseline::StructuringElement>();
  }
  c.connectivity = static_cast<baseline::Connectivity>(j.value("connectivity", 26));
}

PipelineConfig parse_config(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    c = j.get<PipelineConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_config(j);
}

std::string config_hash(const PipelineConfig& c) {
  const std::string text = nlohmann::json(c).dump();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(text.data(), text.size())));
  return buf;
}

std::string method_name(Method m, bool true_semantic) {
  std::string name = m == Method::kEmbedding ? "embedding" : "baseline";
  if (true_semantic) name += "+true_semantic";
  return name;
}

namespace {

struct TileForward {
  std::vector<double> probability;
  nn::FeatureMap embedding;
};

// Eval-mode forward of every tile. Layers cache activations, so each worker
// runs its own copy of the network.
std::vector<TileForward> forward_tiles(const nn::Network& net, const ScalarVolume& normalized, const TilePlan& plan,
                                       bool need_embedding) {
  std::vector<TileForward> out(plan.tile_count());
  const size_t workers = std::min<size_t>(static_cast<size_t>(thread_count()), plan.tile_count());
  std::vector<nn::Network> copies(std::max<size_t>(workers, 1), net);
  std::mutex lock;
  std::vector<size_t> free_slots;
  for (size_t i = 0; i < copies.size(); ++i) free_slots.push_back(i);

  parallel_for(plan.tile_count(), [&](size_t t) {
    size_t slot;
    {
      std::lock_guard<std::mutex> g(lock);
      slot = free_slots.back();
      free_slots.pop_back();
    }
    nn::Network& local = copies[slot];
    const ScalarVolume tile = crop(normalized, plan.origins[t], plan.tile_dims());
    const nn::FeatureMap x = nn::stack_tiles({&tile});
    out[t].probability = nn::foreground_probability(local.semantic.forward(x, nn::Mode::kEval));
    if (need_embedding) out[t].embedding = local.embedding.forward(x, nn::Mode::kEval);
    std::lock_guard<std::mutex> g(lock);
    free_slots.push_back(slot);
  });
  return out;
}

ScalarVolume average_probability(const std::vector<TileForward>& fw, const TilePlan& plan) {
  std::vector<double> sum(static_cast<size_t>(plan.volume.size()), 0.0);
  std::vector<uint32_t> hits(sum.size(), 0);
  const int64_t n = plan.tile_size;
  for (size_t t = 0; t < plan.tile_count(); ++t) {
    const Coord& o = plan.origins[t];
    size_t k = 0;
    for (int64_t z = 0; z < n; ++z) {
      for (int64_t y = 0; y < n; ++y) {
        for (int64_t x = 0; x < n; ++x, ++k) {
          const size_t g = static_cast<size_t>(((o.z + z) * plan.volume.height + o.y + y) * plan.volume.width + o.x + x);
          sum[g] += fw[t].probability[k];
          ++hits[g];
        }
      }
    }
  }
  ScalarVolume prob(plan.volume);
  for (size_t i = 0; i < sum.size(); ++i) prob[i] = static_cast<float>(sum[i] / hits[i]);
  return prob;
}

LabelVolume fallback_labels(const MaskVolume& mask, baseline::Connectivity conn) {
  return baseline::connected_components(mask, conn);
}

}  // namespace

Prediction run_predict(const PipelineConfig& cfg, const nn::Network* net, const ScalarVolume& raw,
                       const PredictOptions& opts) {
  Prediction p;
  p.plan = make_tile_plan(raw.dims(), cfg.tile_size, cfg.overlap);
  const ScalarVolume normalized = normalize_volume(raw);
  if (opts.method == Method::kEmbedding && !net) {
    throw std::invalid_argument("run_predict: the embedding method needs a network");
  }
  if (opts.semantic_override && opts.semantic_override->dims() != raw.dims()) {
    throw std::invalid_argument("run_predict: semantic override dims differ from the input");
  }

  std::vector<TileForward> fw;
  if (net) {
    if (net->config().in_channels != 1) throw CheckpointMismatch("network expects a single input channel");
    fw = forward_tiles(*net, normalized, p.plan, opts.method == Method::kEmbedding);
    p.probability = average_probability(fw, p.plan);
  }

  if (opts.semantic_override) {
    p.semantic_mask = *opts.semantic_override;
  } else if (net) {
    p.semantic_mask = MaskVolume(raw.dims());
    for (size_t i = 0; i < p.probability.size(); ++i) {
      p.semantic_mask[i] = p.probability[i] > cfg.semantic_threshold ? 1 : 0;
    }
  } else {
    p.semantic_mask = threshold_air_mask(normalized, cfg.baseline_intensity_threshold);
  }
  p.semantic_mask.voxel_size_um = raw.voxel_size_um;

  const Dims td = p.plan.tile_dims();
  p.tiles.resize(p.plan.tile_count());
  if (opts.keep_embeddings) p.embeddings.resize(p.plan.tile_count());
  std::vector<uint8_t> fell_back(p.plan.tile_count(), 0);

  parallel_for(p.plan.tile_count(), [&](size_t t) {
    const Coord& origin = p.plan.origins[t];
    const MaskVolume mask = crop(p.semantic_mask, origin, td);
    LabelVolume labels;
    try {
      if (opts.method == Method::kEmbedding) {
        cluster::EmbeddedPointSet points = cluster::mask_embeddings(fw[t].embedding, mask);
        std::vector<uint32_t> assign = cluster::dbscan(points, cfg.dbscan);
        labels = postprocess::watershed_fill(cluster::assignments_to_volume(points, assign, td), mask);
        if (opts.keep_embeddings) p.embeddings[t] = {origin, std::move(points), std::move(assign)};
      } else {
        labels = baseline::baseline_pipeline(mask, cfg.structuring_element, cfg.connectivity);
      }
    } catch (const UnsegmentableTile&) {
      if (opts.strict) throw;
      labels = fallback_labels(mask, cfg.connectivity);
      fell_back[t] = 1;
    }
    p.tiles[t] = {origin, postprocess::relabel_sequential(labels)};
  });
  for (size_t t = 0; t < fell_back.size(); ++t) {
    if (fell_back[t]) p.fallback_tiles.push_back(t);
  }

  p.merged = postprocess::merge_tiles(p.tiles, p.plan, cfg.merge);
  p.merged.labels.voxel_size_um = raw.voxel_size_um;
  return p;
}

metrics::EvaluationReport evaluate_prediction(const PipelineConfig& cfg, const Prediction& p, const LabelVolume& gt,
                                              Method method, bool true_semantic) {
  metrics::EvaluationReport r = metrics::evaluate_report(gt, p.tiles, p.merged.labels, p.semantic_mask);
  r.method = method_name(method, true_semantic);
  r.config_hash = config_hash(cfg);
  return r;
}

std::vector<metrics::EvaluationReport> run_compare(const PipelineConfig& cfg, const nn::Network& net,
                                                   const ScalarVolume& raw, const LabelVolume& gt) {
  if (gt.dims() != raw.dims()) throw std::invalid_argument("run_compare: gt and raw dims differ");
  const MaskVolume truth = foreground_of(gt);
  std::vector<metrics::EvaluationReport> rows;
  for (Method m : {Method::kEmbedding, Method::kBaseline}) {
    for (bool true_sem : {false, true}) {
      PredictOptions opts;
      opts.method = m;
      opts.semantic_override = true_sem ? &truth : nullptr;
      const Prediction p = run_predict(cfg, &net, raw, opts);
      rows.push_back(evaluate_prediction(cfg, p, gt, m, true_sem));
    }
  }
  return rows;
}

nlohmann::json compare_json(const std::vector<metrics::EvaluationReport>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) out.push_back(metrics::to_json(r));
  return out;
}

TrainedModel train_model(const PipelineConfig& cfg) {
  PhantomConfig pc = cfg.phantom;
  pc.seed = cfg.train_phantom_seed;
  const Phantom ph = generate_phantom(pc);
  const ScalarVolume normalized = normalize_volume(ph.raw);

  TrainedModel m;
  m.network = train::train_semantic(cfg.network, normalized, ph.mask, cfg.train, &m.semantic_log);
  m.semantic_stage_checksum = m.network.checksum();
  m.embedding_log =
      train::train_embedding(m.network, normalized, ph.gt, cfg.train, cfg.train.iterations_embedding, true);
  return m;
}

BenchmarkResult run_benchmark(const PipelineConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  BenchmarkResult b;
  b.model = train_model(cfg);
  const Phantom test = generate_phantom(cfg.phantom);
  const MaskVolume truth = foreground_of(test.gt);
  for (Method m : {Method::kEmbedding, Method::kBaseline}) {
    for (bool true_sem : {false, true}) {
      PredictOptions opts;
      opts.method = m;
      opts.semantic_override = true_sem ? &truth : nullptr;
      const Prediction p = run_predict(cfg, &b.model.network, test.raw, opts);
      b.rows.push_back(evaluate_prediction(cfg, p, test.gt, m, true_sem));
      if (!true_sem) (m == Method::kEmbedding ? b.embedding_labels : b.baseline_labels) = p.merged.labels;
    }
  }
  b.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return b;
}

}  // namespace fiberseg
