#include <doctest.h>

#include <map>
#include <numeric>
#include <set>

#include "fiberseg/errors.hpp"
#include "fiberseg/metrics.hpp"
#include "fiberseg/phantom.hpp"
#include "fiberseg/postprocess.hpp"
#include "fiberseg/random.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fiberseg;
using namespace fiberseg::postprocess;
using namespace fixtures;

TEST_SUITE("postprocess") {

TEST_CASE("watershed fill matches the geodesic oracle on random tiles") {
  Rng rng(51);
  for (int trial = 0; trial < 40; ++trial) {
    CAPTURE(trial);
    const Dims d{static_cast<int64_t>(4 + rng.uniform_int(12)), static_cast<int64_t>(4 + rng.uniform_int(12)),
                 static_cast<int64_t>(4 + rng.uniform_int(12))};
    const SeededTile t = random_seeded_tile(rng, d);
    const LabelVolume filled = watershed_fill(t.labels, t.fg);
    const LabelVolume expect = oracle::brute_force_fill(t.labels, t.fg);
    uint32_t max_seed = 0;
    for (uint32_t v : t.labels.data()) {
      if (v != kOutlier) max_seed = std::max(max_seed, v);
    }
    for (size_t i = 0; i < t.labels.size(); ++i) {
      if (!t.fg[i]) {
        REQUIRE(filled[i] == 0u);
      } else if (t.labels[i] != kOutlier) {
        REQUIRE(filled[i] == t.labels[i]);
      } else if (expect[i] != 0) {
        REQUIRE(filled[i] == expect[i]);
      } else {
        REQUIRE(filled[i] > max_seed);  // unreachable outliers become new instances
        REQUIRE(filled[i] != kOutlier);
      }
    }
    // Each fresh ID is exactly one outlier component.
    MaskVolume fresh(d);
    for (size_t i = 0; i < d.size(); ++i) fresh[i] = filled[i] > max_seed ? 1 : 0;
    const LabelVolume cc = oracle::bfs_components(fresh, 26);
    CHECK(oracle::same_partition(cc, filled, [&](size_t i) { return fresh[i] != 0; }));
  }
}

TEST_CASE("watershed edge cases") {
  LabelVolume l(Dims{1, 1, 5});
  MaskVolume fg(l.dims(), 1);
  oracle::assign(l, {2, kOutlier, kOutlier, kOutlier, 1});
  // Ties at equal distance go to the smaller ID.
  CHECK(watershed_fill(l, fg).values() == std::vector<uint32_t>{2, 2, 1, 1, 1});
  oracle::assign(l, {0, kOutlier, 0, 0, 0});
  CHECK_THROWS_AS(watershed_fill(l, fg), UnsegmentableTile);
  fg[1] = 0;
  CHECK_THROWS(watershed_fill(l, fg));
  oracle::assign(l, {0, 3, 0, 0, 0});
  CHECK(watershed_fill(l, fg) == l);
}

TEST_CASE("relabel_sequential orders IDs by first appearance") {
  LabelVolume l(Dims{1, 1, 6});
  oracle::assign(l, {0, 9, 4, 9, kOutlier, 4000});
  size_t n = 0;
  CHECK(relabel_sequential(l, &n).values() == std::vector<uint32_t>{0, 1, 2, 1, kOutlier, 3});
  CHECK(n == 3);
}

TEST_CASE("overlap link counts match a direct count") {
  Rng rng(52);
  for (int trial = 0; trial < 10; ++trial) {
    InstanceTile a{{0, 0, 0}, LabelVolume(Dims::cube(12))}, b{{4, 6, 0}, LabelVolume(Dims::cube(12))};
    for (auto& v : a.labels.data()) v = static_cast<uint32_t>(rng.uniform_int(4));
    for (auto& v : b.labels.data()) v = static_cast<uint32_t>(rng.uniform_int(3));
    std::map<std::pair<uint32_t, uint32_t>, uint64_t> direct;
    for (int64_t z = 0; z < 16; ++z) {
      for (int64_t y = 0; y < 18; ++y) {
        for (int64_t x = 0; x < 12; ++x) {
          const bool in_a = z < 12 && y < 12, in_b = z >= 4 && y >= 6;
          if (!in_a || !in_b) continue;
          const uint32_t la = a.labels(z, y, x), lb = b.labels(z - 4, y - 6, x);
          if (la && lb) ++direct[{la, lb}];
        }
      }
    }
    const auto links = compute_overlap_links(a, b, 3, 5);
    REQUIRE(links.size() == direct.size());
    for (const auto& l : links) {
      CHECK(l.f.tile == 3);
      CHECK(l.g.tile == 5);
      CHECK(l.affinity == direct.at({l.f.id, l.g.id}));
    }
  }
  InstanceTile far{{20, 0, 0}, LabelVolume(Dims::cube(12))};
  CHECK_THROWS(compute_overlap_links(InstanceTile{{0, 0, 0}, LabelVolume(Dims::cube(12))}, far));
}

TEST_CASE("merging: union-find equals recursive equals the graph components") {
  Rng rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<uint32_t> counts(1 + rng.uniform_int(8));
    for (auto& c : counts) c = static_cast<uint32_t>(rng.uniform_int(7));
    const auto links = random_links(rng, counts, rng.uniform_int(40));
    const uint64_t alpha = 1 + rng.uniform_int(5);
    const ComponentMap uf = merge_components_union_find(counts, links, alpha);
    const ComponentMap rec = merge_components_recursive(counts, links, alpha);
    CHECK(uf == rec);
    const auto oracle_comp = link_components(counts, links, alpha);
    // Same partition of the (tile, id) nodes; a node maps to one component, so nothing splits.
    std::map<uint32_t, size_t> a2b;
    std::map<size_t, uint32_t> b2a;
    for (const auto& [node, c] : oracle_comp) {
      const uint32_t mine = uf[node.tile][node.id];
      CHECK((!a2b.count(mine) || a2b[mine] == c));
      CHECK((!b2a.count(c) || b2a[c] == mine));
      a2b[mine] = c;
      b2a[c] = mine;
    }
    // Accepted links always join; rejected links alone never do.
    for (const auto& l : links) {
      if (l.affinity > alpha) CHECK(uf[l.f.tile][l.f.id] == uf[l.g.tile][l.g.id]);
    }
  }
  const std::vector<uint32_t> counts{1};
  CHECK_THROWS(merge_components_union_find(counts, {{{0, 2}, {0, 1}, 9}}, 3));
}

TEST_CASE("permuted ground-truth crops merge back to the ground truth") {
  const Phantom p = generate_phantom(PhantomConfig{});
  const TilePlan plan = make_tile_plan(p.gt.dims());
  Rng rng(54);
  const auto tiles = permuted_crops(p.gt, plan, rng);
  const MergeResult m = merge_tiles(tiles, plan, MergeParams{});
  CHECK(metrics::adjusted_rand_index(p.gt, m.labels) == 1.0);
  CHECK(m.global_count == 25);
  CHECK(m.accepted.size() == m.links.size());
  const auto audit = merge_audit(m, tiles);
  CHECK(audit.at("links").size() == m.links.size());
  // Background stays background.
  for (size_t i = 0; i < p.gt.size(); ++i) REQUIRE((p.gt[i] == 0) == (m.labels[i] == 0));
}

TEST_CASE("merge input validation") {
  const TilePlan plan = make_tile_plan(Dims::cube(48));
  std::vector<InstanceTile> tiles;
  for (const Coord& o : plan.origins) tiles.push_back({o, LabelVolume(plan.tile_dims())});
  CHECK(merge_tiles(tiles, plan, {}).global_count == 0);
  tiles[0].labels[0] = kOutlier;
  CHECK_THROWS(merge_tiles(tiles, plan, {}));
  tiles.pop_back();
  CHECK_THROWS(merge_tiles(tiles, plan, {}));
  CHECK_THROWS_AS(MergeParams{0}.validate(), ConfigError);
}

}  // TEST_SUITE
