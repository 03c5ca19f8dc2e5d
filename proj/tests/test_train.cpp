#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>

#include "fiberseg/errors.hpp"
#include "fiberseg/phantom.hpp"
#include "fiberseg/train.hpp"
#include "oracles.hpp"

using namespace fiberseg;
using namespace fiberseg::train;

namespace {

Phantom three_fibers() {
  PhantomConfig c;
  c.dims = Dims::cube(32);
  const std::vector<FiberSpec> f{{{2.0, 8.0, 8.0}, {30.0, 10.0, 9.0}, 1.5},
                                 {{16.0, 2.0, 22.0}, {18.0, 30.0, 20.0}, 1.2},
                                 {{6.0, 24.0, 2.0}, {26.0, 22.0, 30.0}, 1.0}};
  return render_fibers(c, f);
}

nn::NetworkConfig small_net() {
  nn::NetworkConfig n;
  n.trunk_channels = 4;
  n.blocks_per_branch = 1;
  n.embedding_dims = 4;
  return n;
}

TrainConfig quick(int semantic, int embedding) {
  TrainConfig c;
  c.iterations_semantic = semantic;
  c.iterations_embedding = embedding;
  c.batch_size = 2;
  c.tile_size = 16;
  c.adam.lr = 0.01;
  return c;
}

double mean_loss(const StageLog& log, size_t from, size_t to) {
  double s = 0.0;
  for (size_t i = from; i < to; ++i) s += log.records[i].loss;
  return s / static_cast<double>(to - from);
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("tile corners are uniform") {
  const ScalarVolume v(Dims::cube(64));
  const LabelVolume gt(Dims::cube(64));
  Rng rng(71);
  // 33 possible corners per axis; chi-square with 32 degrees of freedom, 1% critical value 53.49.
  std::array<std::array<int, 33>, 3> hist{};
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto s = sample_training_tile(v, gt, 32, false, rng);
    ++hist[0][static_cast<size_t>(s.corner.z)];
    ++hist[1][static_cast<size_t>(s.corner.y)];
    ++hist[2][static_cast<size_t>(s.corner.x)];
  }
  const double expected = draws / 33.0;
  for (const auto& h : hist) {
    double chi2 = 0.0;
    for (int n : h) chi2 += (n - expected) * (n - expected) / expected;
    CHECK(chi2 < 53.49);
  }
}

TEST_CASE("sampled tiles are consistent crops") {
  const Phantom p = three_fibers();
  Rng rng(72);
  for (int i = 0; i < 20; ++i) {
    const auto s = sample_training_tile(p.raw, p.gt, 16, true, rng);
    const auto raw = apply_isometry(crop(p.raw, s.corner, Dims::cube(16)), s.isometry);
    CHECK(raw == s.raw);
    for (size_t k = 0; k < s.gt.size(); ++k) REQUIRE((s.gt[k] != 0) == (s.mask[k] != 0));
  }
  // A 32^3 volume with 32^3 tiles has exactly one corner.
  const auto full = sample_training_tile(p.raw, p.gt, 32, false, rng);
  CHECK(full.corner == Coord{0, 0, 0});
  CHECK(full.raw == p.raw);
  CHECK_THROWS(sample_training_tile(p.raw, p.gt, 33, false, rng));
}

TEST_CASE("semantic training lowers the BCE and is deterministic") {
  const Phantom p = three_fibers();
  const ScalarVolume v = normalize_volume(p.raw);
  StageLog log;
  nn::Network net = train_semantic(small_net(), v, p.mask, quick(500, 0), &log);
  REQUIRE(log.records.size() == 500);
  CHECK(mean_loss(log, 450, 500) < 0.5 * mean_loss(log, 0, 50));

  StageLog again;
  TrainConfig short_run = quick(20, 0);
  nn::Network a = train_semantic(small_net(), v, p.mask, short_run, &again);
  nn::Network b = train_semantic(small_net(), v, p.mask, short_run);
  CHECK(a.checksum() == b.checksum());
  short_run.seed = 99;
  CHECK(train_semantic(small_net(), v, p.mask, short_run).checksum() != a.checksum());
}

TEST_CASE("embedding training lowers the loss and leaves the semantic branch alone") {
  const Phantom p = three_fibers();
  const ScalarVolume v = normalize_volume(p.raw);
  const TrainConfig cfg = quick(100, 1000);
  nn::Network net = train_semantic(small_net(), v, p.mask, cfg);
  const uint64_t semantic_before = net.semantic_checksum();
  const StageLog log = train_embedding(net, v, p.gt, cfg, cfg.iterations_embedding, true);
  REQUIRE(log.records.size() == 1000);
  CHECK(mean_loss(log, 950, 1000) < 0.7 * mean_loss(log, 0, 50));
  CHECK(net.semantic_checksum() == semantic_before);
  for (const auto& r : log.records) {
    REQUIRE(std::isfinite(r.loss));
    REQUIRE(r.loss == doctest::Approx(r.variance + r.distance + 0.001 * r.regularization));
  }
}

TEST_CASE("one fiber per tile: the push term never contributes") {
  PhantomConfig c;
  c.dims = Dims::cube(32);
  const std::vector<FiberSpec> one{{{2.0, 10.0, 12.0}, {30.0, 20.0, 18.0}, 1.5}};
  const Phantom p = render_fibers(c, one);
  const ScalarVolume v = normalize_volume(p.raw);
  const TrainConfig cfg = quick(10, 30);
  nn::Network net = train_semantic(small_net(), v, p.mask, cfg);
  for (const auto& r : train_embedding(net, v, p.gt, cfg, 30, true).records) CHECK(r.distance == 0.0);
}

TEST_CASE("zero-iteration continuation leaves the network unchanged") {
  const Phantom p = three_fibers();
  const ScalarVolume v = normalize_volume(p.raw);
  const TrainConfig cfg = quick(5, 0);
  nn::Network net = train_semantic(small_net(), v, p.mask, cfg);
  const uint64_t before = net.checksum();
  CHECK(train_semantic(net, v, p.mask, cfg, 0).records.empty());
  CHECK(train_embedding(net, v, p.gt, cfg, 0, false).records.empty());
  CHECK(net.checksum() == before);
}

TEST_CASE("batch embedding loss skips samples without foreground") {
  nn::FeatureMap e(2, 1, Dims{1, 1, 2});
  e.data = {0.0, 1.0, 5.0, 7.0};
  LabelVolume with(Dims{1, 1, 2}), without(Dims{1, 1, 2});
  oracle::assign(with, {1, 1});
  losses::EmbeddingLossParams p;
  p.delta_v = 0.2;
  nn::FeatureMap grad;
  const auto r = batch_embedding_loss(e, {&with, &without}, p, &grad);
  CHECK(r.total == doctest::Approx(0.0905));
  CHECK(grad.same_shape(e));
  CHECK(grad.channel(1, 0)[0] == 0.0);
  CHECK(grad.channel(1, 0)[1] == 0.0);
}

TEST_CASE("loss csv and config validation") {
  StageLog log{"semantic", {}};
  for (int i = 1; i <= 250; ++i) log.records.push_back({i, 1.0 / i, 0, 0, 0});
  const auto path = std::filesystem::temp_directory_path() / "fiberseg_tests" / "loss.csv";
  std::filesystem::create_directories(path.parent_path());
  write_loss_csv(path, log, 100);
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  REQUIRE(lines.size() == 5);  // header, 1, 100, 200, 250
  CHECK(lines[0] == "stage,iteration,loss,window_mean,variance,distance,regularization");
  CHECK(lines[2].rfind("semantic,100,", 0) == 0);

  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.iterations_semantic = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const nlohmann::json j = TrainConfig{};
  CHECK(j.get<TrainConfig>().iterations_embedding == 2000);
}

}  // TEST_SUITE
