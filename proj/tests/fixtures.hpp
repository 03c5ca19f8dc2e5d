#pragma once

// Random inputs shared by the unit tests and the acceptance suite.

#include <map>
#include <numeric>
#include <vector>

#include "fiberseg/phantom.hpp"
#include "fiberseg/postprocess.hpp"
#include "fiberseg/random.hpp"
#include "oracles.hpp"

namespace fixtures {

using namespace fiberseg;
using namespace fiberseg::postprocess;

struct SeededTile {
  LabelVolume labels;
  MaskVolume fg;
};

// Foreground from a few random thick segments plus speckle; a random subset
// of it carries seed IDs, the rest is outlier.
inline SeededTile random_seeded_tile(Rng& rng, Dims d) {
  SeededTile t{LabelVolume(d), MaskVolume(d)};
  const int segments = 1 + static_cast<int>(rng.uniform_int(5));
  for (int s = 0; s < segments; ++s) {
    const Vec3 a{rng.uniform(0, d.depth), rng.uniform(0, d.height), rng.uniform(0, d.width)};
    const Vec3 b{rng.uniform(0, d.depth), rng.uniform(0, d.height), rng.uniform(0, d.width)};
    for (size_t i : rasterize_capsule(d, a, b, rng.uniform(0.8, 2.0))) t.fg[i] = 1;
  }
  for (size_t i = 0; i < t.fg.size(); ++i) {
    if (rng.uniform() < 0.01) t.fg[i] = 1;
  }
  const uint64_t ids = 1 + rng.uniform_int(6);
  const double seed_rate = rng.uniform(0.02, 0.4);
  for (size_t i = 0; i < t.fg.size(); ++i) {
    if (!t.fg[i]) continue;
    t.labels[i] = rng.uniform() < seed_rate ? static_cast<uint32_t>(1 + rng.uniform_int(ids)) : kOutlier;
  }
  // Make sure at least one seed exists.
  for (size_t i = 0; i < t.fg.size(); ++i) {
    if (t.fg[i]) {
      t.labels[i] = 1;
      break;
    }
  }
  return t;
}

inline std::vector<OverlapLink> random_links(Rng& rng, const std::vector<uint32_t>& counts, size_t n) {
  std::vector<OverlapLink> links;
  for (size_t k = 0; k < n; ++k) {
    const size_t ta = rng.uniform_int(counts.size()), tb = rng.uniform_int(counts.size());
    if (counts[ta] == 0 || counts[tb] == 0) continue;
    links.push_back({{ta, static_cast<uint32_t>(1 + rng.uniform_int(counts[ta]))},
                     {tb, static_cast<uint32_t>(1 + rng.uniform_int(counts[tb]))},
                     rng.uniform_int(8)});
  }
  return links;
}

// Components of the accepted-link graph by flood fill over an explicit node list.
inline std::map<TileFiber, size_t> link_components(const std::vector<uint32_t>& counts, const std::vector<OverlapLink>& links,
                                            uint64_t alpha) {
  std::map<TileFiber, std::vector<TileFiber>> adj;
  for (size_t t = 0; t < counts.size(); ++t) {
    for (uint32_t id = 1; id <= counts[t]; ++id) adj[{t, id}];
  }
  for (const auto& l : links) {
    if (l.affinity <= alpha) continue;
    adj[l.f].push_back(l.g);
    adj[l.g].push_back(l.f);
  }
  std::map<TileFiber, size_t> comp;
  size_t next = 0;
  for (const auto& [node, _] : adj) {
    if (comp.count(node)) continue;
    std::vector<TileFiber> stack{node};
    comp[node] = next;
    while (!stack.empty()) {
      const TileFiber f = stack.back();
      stack.pop_back();
      for (const TileFiber& g : adj[f]) {
        if (comp.emplace(g, next).second) stack.push_back(g);
      }
    }
    ++next;
  }
  return comp;
}

/// Ground-truth crops of every planned tile, local IDs made sequential and then shuffled.
inline std::vector<InstanceTile> permuted_crops(const LabelVolume& gt, const TilePlan& plan, Rng& rng) {
  std::vector<InstanceTile> tiles;
  for (const Coord& o : plan.origins) {
    LabelVolume c = relabel_sequential(crop(gt, o, plan.tile_dims()));
    uint32_t k = 0;
    for (uint32_t v : c.data()) k = std::max(k, v);
    std::vector<uint32_t> perm(k);
    std::iota(perm.begin(), perm.end(), 1u);
    oracle::shuffle(perm, rng);
    for (auto& v : c.data()) {
      if (v) v = perm[v - 1];
    }
    tiles.push_back({o, std::move(c)});
  }
  return tiles;
}

}  // namespace fixtures
