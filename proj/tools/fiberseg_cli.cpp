// fiberseg command line: generate, train, predict, eval, compare, gradcheck.
//
// Exit codes: 0 ok, 1 other failure, 2 invalid config, 3 checkpoint mismatch,
// 4 unsegmentable tile (--strict), 5 gradient check failure / non-finite gradient.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "fiberseg/checkpoint.hpp"
#include "fiberseg/errors.hpp"
#include "fiberseg/gradcheck.hpp"
#include "fiberseg/parallel.hpp"
#include "fiberseg/pipeline.hpp"
#include "fiberseg/volume_io.hpp"

namespace fs = std::filesystem;
using namespace fiberseg;
using nlohmann::json;

namespace {

struct Shared {
  std::string config;
  std::optional<uint64_t> seed;
  int threads = 1;
  std::string out_dir = ".";
};

PipelineConfig load_shared(const Shared& s) {
  PipelineConfig cfg = s.config.empty() ? parse_config(json::object()) : load_config(s.config);
  set_thread_count(s.threads);
  fs::create_directories(s.out_dir);
  return cfg;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void add_shared(CLI::App* app, Shared& s) {
  app->add_option("--config", s.config, "Pipeline config JSON (defaults when omitted)");
  app->add_option("--seed", s.seed, "Seed override for this command");
  app->add_option("--threads", s.threads, "Worker threads")->check(CLI::PositiveNumber);
  app->add_option("--out-dir", s.out_dir, "Output directory");
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  bool training = false;
};

int cmd_generate(const Shared& s, const GenerateArgs& a) {
  PipelineConfig cfg = load_shared(s);
  PhantomConfig pc = cfg.phantom;
  if (a.training) pc.seed = cfg.train_phantom_seed;
  if (s.seed) pc.seed = *s.seed;
  const Phantom ph = generate_phantom(pc);
  const fs::path out(s.out_dir);
  write_volume(out / "raw", ph.raw);
  write_volume(out / "gt", ph.gt);
  write_volume(out / "mask", ph.mask);
  json report = to_json(phantom_report(ph.gt));
  report["seed"] = pc.seed;
  report["config_hash"] = config_hash(cfg);
  json fibers = json::array();
  for (const auto& f : ph.fibers) fibers.push_back({{"a", f.a}, {"b", f.b}, {"radius", f.radius}});
  report["specs"] = fibers;
  write_json(out / "phantom_stats.json", report);
  std::cout << "generated " << report["count"] << " fibers into " << out.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string stage = "semantic";
  std::optional<int> iters;
  std::string init;
  std::string out = "model.ckpt";
  std::string raw;
  std::string gt;
};

int cmd_train(const Shared& s, const TrainArgs& a) {
  PipelineConfig cfg = load_shared(s);
  if (s.seed) cfg.train.seed = *s.seed;

  ScalarVolume raw;
  LabelVolume gt;
  if (!a.raw.empty() || !a.gt.empty()) {
    if (a.raw.empty() || a.gt.empty()) throw ConfigError("--raw and --gt go together");
    raw = read_scalar_volume(a.raw);
    gt = read_label_volume(a.gt);
  } else {
    PhantomConfig pc = cfg.phantom;
    pc.seed = cfg.train_phantom_seed;
    Phantom ph = generate_phantom(pc);
    raw = std::move(ph.raw);
    gt = std::move(ph.gt);
  }
  const ScalarVolume normalized = normalize_volume(raw);

  nn::Network net(cfg.network);
  if (!a.init.empty()) {
    Checkpoint ck = load_checkpoint(a.init);
    if (!(ck.network.config() == cfg.network)) {
      throw CheckpointMismatch("--init checkpoint architecture differs from the config");
    }
    net = std::move(ck.network);
  } else if (a.stage == "embedding") {
    throw ConfigError("the embedding stage needs --init <semantic checkpoint>");
  } else {
    Rng init = Rng(cfg.train.seed).split(0x696e6974);
    net.init(init);
  }

  train::StageLog log;
  if (a.stage == "semantic") {
    const int iters = a.iters.value_or(cfg.train.iterations_semantic);
    log = train::train_semantic(net, normalized, foreground_of(gt), cfg.train, iters);
  } else {
    const int iters = a.iters.value_or(cfg.train.iterations_embedding);
    const uint64_t before = net.semantic_checksum();
    // Starting from a semantic-stage checkpoint copies its trunk; continuing an
    // embedding checkpoint keeps the embedding branch as it is.
    bool from_semantic = true;
    {
      Checkpoint ck = load_checkpoint(a.init);
      from_semantic = ck.snapshot.value("stage", std::string("semantic")) == "semantic";
    }
    log = train::train_embedding(net, normalized, gt, cfg.train, iters, from_semantic);
    if (net.semantic_checksum() != before) throw std::logic_error("semantic branch changed during embedding stage");
  }

  const fs::path out_path = fs::path(s.out_dir) / a.out;
  json snapshot = {{"stage", a.stage},
                   {"iterations", log.records.size()},
                   {"train", cfg.train},
                   {"config_hash", config_hash(cfg)},
                   {"checksum", net.checksum()}};
  save_checkpoint(out_path, net, snapshot);
  const fs::path csv = fs::path(s.out_dir) / (a.stage + "_loss.csv");
  train::write_loss_csv(csv, log, cfg.train.log_every);
  if (!log.records.empty()) {
    std::cout << a.stage << ": " << log.records.size() << " iterations, first loss " << log.records.front().loss
              << ", last loss " << log.records.back().loss << '\n';
  }
  std::cout << "checkpoint " << out_path.string() << " checksum " << net.checksum() << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint;
  std::string input;
  std::string method = "embedding";
  std::string true_semantic;  // gt labels or mask replacing the predicted semantic mask
  std::string gt;             // optional: write an evaluation report
  bool dump_embeddings = false;
  bool audit = false;
  bool strict = false;
  bool save_tiles = false;
  std::optional<double> air_threshold;  // overrides baseline_intensity_threshold
};

std::optional<nn::Network> load_network(const std::string& path, const PipelineConfig& cfg) {
  if (path.empty()) return std::nullopt;
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.network.config() == cfg.network)) {
    throw CheckpointMismatch("checkpoint architecture differs from the config");
  }
  return std::move(ck.network);
}

int cmd_predict(const Shared& s, const PredictArgs& a) {
  PipelineConfig cfg = load_shared(s);
  if (a.air_threshold) cfg.baseline_intensity_threshold = *a.air_threshold;
  const Method method = a.method == "baseline" ? Method::kBaseline : Method::kEmbedding;
  std::optional<nn::Network> net = load_network(a.checkpoint, cfg);
  if (method == Method::kEmbedding && !net) throw ConfigError("--method embedding needs --checkpoint");

  const ScalarVolume raw = read_scalar_volume(a.input);
  std::optional<MaskVolume> override_mask;
  if (!a.true_semantic.empty()) override_mask = foreground_of(read_label_volume(a.true_semantic));

  PredictOptions opts;
  opts.method = method;
  opts.semantic_override = override_mask ? &*override_mask : nullptr;
  opts.keep_embeddings = a.dump_embeddings;
  opts.strict = a.strict;
  const Prediction p = run_predict(cfg, net ? &*net : nullptr, raw, opts);

  const fs::path out(s.out_dir);
  write_volume(out / "labels", p.merged.labels);
  write_volume(out / "semantic", p.semantic_mask);
  if (!p.probability.empty()) write_volume(out / "probability", p.probability);
  if (a.save_tiles) {
    fs::create_directories(out / "tiles");
    for (size_t t = 0; t < p.tiles.size(); ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "tile_%03zu", t);
      write_volume(out / "tiles" / name, p.tiles[t].labels);
    }
  }
  if (a.dump_embeddings) {
    fs::create_directories(out / "embeddings");
    for (size_t t = 0; t < p.embeddings.size(); ++t) {
      char name[32];
      std::snprintf(name, sizeof name, "tile_%03zu.csv", t);
      cluster::write_embedding_csv(out / "embeddings" / name, p.embeddings[t].points, p.embeddings[t].labels,
                                   p.embeddings[t].origin);
    }
  }
  if (a.audit) write_json(out / "merge_audit.json", postprocess::merge_audit(p.merged, p.tiles));

  json summary = {{"method", method_name(method, override_mask.has_value())},
                  {"tiles", p.tiles.size()},
                  {"fallback_tiles", p.fallback_tiles},
                  {"instances", p.merged.global_count},
                  {"config_hash", config_hash(cfg)}};
  if (!a.gt.empty()) {
    const LabelVolume gt = read_label_volume(a.gt);
    summary["report"] = metrics::to_json(evaluate_prediction(cfg, p, gt, method, override_mask.has_value()));
  }
  write_json(out / "predict.json", summary);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string gt;
  std::string pred;
  std::string semantic;
  std::string tiles_dir;
  std::string method = "embedding";
};

int cmd_eval(const Shared& s, const EvalArgs& a) {
  PipelineConfig cfg = load_shared(s);
  const LabelVolume gt = read_label_volume(a.gt);
  const LabelVolume pred = read_label_volume(a.pred);
  if (gt.dims() != pred.dims()) throw ConfigError("gt and prediction dims differ");
  const MaskVolume semantic = a.semantic.empty() ? foreground_of(pred) : read_mask_volume(a.semantic);

  const TilePlan plan = make_tile_plan(gt.dims(), cfg.tile_size, cfg.overlap);
  std::vector<postprocess::InstanceTile> tiles;
  for (size_t t = 0; t < plan.tile_count(); ++t) {
    LabelVolume labels;
    if (!a.tiles_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "tile_%03zu", t);
      labels = read_label_volume(fs::path(a.tiles_dir) / name);
    } else {
      labels = crop(pred, plan.origins[t], plan.tile_dims());
    }
    tiles.push_back({plan.origins[t], std::move(labels)});
  }
  metrics::EvaluationReport r = metrics::evaluate_report(gt, tiles, pred, semantic);
  r.method = a.method;
  r.config_hash = config_hash(cfg);
  const json j = metrics::to_json(r);
  write_json(fs::path(s.out_dir) / "report.json", j);
  std::cout << j.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct CompareArgs {
  std::string checkpoint;
  bool train_first = false;
  std::string raw;
  std::string gt;
};

int cmd_compare(const Shared& s, const CompareArgs& a) {
  PipelineConfig cfg = load_shared(s);
  if (s.seed) cfg.train.seed = *s.seed;

  nn::Network net;
  if (a.train_first) {
    TrainedModel m = train_model(cfg);
    const fs::path out(s.out_dir);
    train::write_loss_csv(out / "semantic_loss.csv", m.semantic_log, cfg.train.log_every);
    train::write_loss_csv(out / "embedding_loss.csv", m.embedding_log, cfg.train.log_every);
    save_checkpoint(out / "model.ckpt", m.network,
                    {{"stage", "embedding"}, {"train", cfg.train}, {"config_hash", config_hash(cfg)}});
    net = std::move(m.network);
  } else {
    std::optional<nn::Network> loaded = load_network(a.checkpoint, cfg);
    if (!loaded) throw ConfigError("compare needs --checkpoint or --train-first");
    net = std::move(*loaded);
  }

  ScalarVolume raw;
  LabelVolume gt;
  if (!a.raw.empty()) {
    if (a.gt.empty()) throw ConfigError("--raw needs --gt");
    raw = read_scalar_volume(a.raw);
    gt = read_label_volume(a.gt);
  } else {
    Phantom ph = generate_phantom(cfg.phantom);
    raw = std::move(ph.raw);
    gt = std::move(ph.gt);
  }
  const json rows = compare_json(run_compare(cfg, net, raw, gt));
  write_json(fs::path(s.out_dir) / "compare.json", rows);
  std::cout << rows.dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::string corrupt;
};

int cmd_gradcheck(const Shared& s, const GradcheckArgs& a) {
  set_thread_count(s.threads);
  gradcheck::Options opts;
  if (s.seed) opts.seed = *s.seed;
  opts.corrupt = a.corrupt;
  const auto results = gradcheck::run_all(opts);
  for (const auto& r : results) {
    std::printf("%-16s max_rel_err %.3e  (< %.0e)  %s  worst %s\n", r.op.c_str(), r.max_rel_error, r.threshold,
                r.passed() ? "ok" : "FAIL", r.worst.c_str());
  }
  const json j = gradcheck::to_json(results);
  fs::create_directories(s.out_dir);
  write_json(fs::path(s.out_dir) / "gradcheck.json", j);
  return j.at("passed").get<bool>() ? 0 : 5;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D fiber instance segmentation"};
  app.require_subcommand(1);

  Shared shared;
  GenerateArgs gen;
  TrainArgs tr;
  PredictArgs pr;
  EvalArgs ev;
  CompareArgs cmp;
  GradcheckArgs gc;

  auto* generate = app.add_subcommand("generate", "Write a synthetic phantom (raw, gt, mask)");
  add_shared(generate, shared);
  generate->add_flag("--training", gen.training, "Use the training phantom seed");

  auto* train = app.add_subcommand("train", "Run one training stage and write a checkpoint");
  add_shared(train, shared);
  train->add_option("--stage", tr.stage)->check(CLI::IsMember({"semantic", "embedding"}));
  train->add_option("--iters", tr.iters)->check(CLI::NonNegativeNumber);
  train->add_option("--init", tr.init, "Checkpoint to start from");
  train->add_option("--out", tr.out, "Checkpoint file name inside --out-dir");
  train->add_option("--raw", tr.raw, "Training raw volume (default: training phantom)");
  train->add_option("--gt", tr.gt, "Training ground-truth labels");

  auto* predict = app.add_subcommand("predict", "Tile, segment and merge a volume");
  add_shared(predict, shared);
  predict->add_option("--checkpoint", pr.checkpoint);
  predict->add_option("--input", pr.input)->required();
  predict->add_option("--method", pr.method)->check(CLI::IsMember({"embedding", "baseline"}));
  predict->add_option("--true-semantic", pr.true_semantic, "Labels/mask replacing the predicted semantic mask");
  predict->add_option("--gt", pr.gt, "Ground truth for an evaluation report");
  predict->add_flag("--dump-embeddings", pr.dump_embeddings);
  predict->add_flag("--audit", pr.audit, "Write the merge link table");
  predict->add_flag("--strict", pr.strict, "Fail on unsegmentable tiles");
  predict->add_flag("--save-tiles", pr.save_tiles, "Write the pre-merge tile labelings");
  predict->add_option("--air-threshold", pr.air_threshold,
                      "Intensity threshold (normalised units) for the baseline mask without a network");

  auto* eval = app.add_subcommand("eval", "Score a labeling against ground truth");
  add_shared(eval, shared);
  eval->add_option("--gt", ev.gt)->required();
  eval->add_option("--pred", ev.pred)->required();
  eval->add_option("--semantic", ev.semantic, "Predicted semantic mask (default: pred > 0)");
  eval->add_option("--tiles-dir", ev.tiles_dir, "Pre-merge tiles from predict --save-tiles");
  eval->add_option("--method", ev.method);

  auto* compare = app.add_subcommand("compare", "Embedding vs baseline, each with predicted and true semantic");
  add_shared(compare, shared);
  compare->add_option("--checkpoint", cmp.checkpoint);
  compare->add_flag("--train-first", cmp.train_first);
  compare->add_option("--raw", cmp.raw);
  compare->add_option("--gt", cmp.gt);

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  add_shared(grad, shared);
  grad->add_option("--corrupt", gc.corrupt, "Perturb the analytic gradient of this op (test hook)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*generate) return cmd_generate(shared, gen);
    if (*train) return cmd_train(shared, tr);
    if (*predict) return cmd_predict(shared, pr);
    if (*eval) return cmd_eval(shared, ev);
    if (*compare) return cmd_compare(shared, cmp);
    if (*grad) return cmd_gradcheck(shared, gc);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const CheckpointMismatch& e) {
    std::cerr << "checkpoint mismatch: " << e.what() << '\n';
    return 3;
  } catch (const UnsegmentableTile& e) {
    std::cerr << "unsegmentable tile: " << e.what() << '\n';
    return 4;
  } catch (const NonFiniteGradient& e) {
    std::cerr << "non-finite gradient: " << e.what() << '\n';
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
