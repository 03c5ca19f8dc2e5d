#include "fiberseg/postprocess.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>

#include "fiberseg/errors.hpp"
#include "fiberseg/parallel.hpp"

namespace fiberseg::postprocess {

namespace {

// Visits the in-bounds 26-neighbours of linear index i.
template <typename Fn>
void for_each_neighbour26(const Dims& d, size_t i, Fn&& fn) {
  const auto idx = static_cast<int64_t>(i);
  const int64_t plane = d.height * d.width;
  const int64_t z = idx / plane, y = (idx % plane) / d.width, x = idx % d.width;
  for (int64_t dz = -1; dz <= 1; ++dz) {
    const int64_t nz = z + dz;
    if (nz < 0 || nz >= d.depth) continue;
    for (int64_t dy = -1; dy <= 1; ++dy) {
      const int64_t ny = y + dy;
      if (ny < 0 || ny >= d.height) continue;
      for (int64_t dx = -1; dx <= 1; ++dx) {
        const int64_t nx = x + dx;
        if ((dz | dy | dx) == 0 || nx < 0 || nx >= d.width) continue;
        fn(static_cast<size_t>((nz * d.height + ny) * d.width + nx));
      }
    }
  }
}

class DisjointSet {
 public:
  explicit DisjointSet(size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), size_t{0}); }

  size_t find(size_t v) {
    while (parent_[v] != v) {
      parent_[v] = parent_[parent_[v]];
      v = parent_[v];
    }
    return v;
  }

  // The smaller index becomes the root, so roots are component minima.
  void unite(size_t a, size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<size_t> parent_;
};

std::vector<size_t> node_offsets(const std::vector<uint32_t>& counts) {
  std::vector<size_t> offset(counts.size() + 1, 0);
  for (size_t t = 0; t < counts.size(); ++t) offset[t + 1] = offset[t] + counts[t];
  return offset;
}

size_t node_of(const std::vector<size_t>& offset, const std::vector<uint32_t>& counts, const TileFiber& f) {
  if (f.tile >= counts.size() || f.id == 0 || f.id > counts[f.tile]) {
    throw std::out_of_range("link refers to an unknown fiber");
  }
  return offset[f.tile] + f.id - 1;
}

ComponentMap to_component_map(const std::vector<uint32_t>& counts, const std::vector<size_t>& component_of_node) {
  const auto offset = node_offsets(counts);
  ComponentMap out(counts.size());
  for (size_t t = 0; t < counts.size(); ++t) {
    out[t].assign(counts[t] + 1, 0);
    for (uint32_t id = 1; id <= counts[t]; ++id) {
      out[t][id] = static_cast<uint32_t>(component_of_node[offset[t] + id - 1]);
    }
  }
  return out;
}

struct Box {
  Coord lo;
  Coord hi;  // exclusive
  bool empty() const { return lo.z >= hi.z || lo.y >= hi.y || lo.x >= hi.x; }
};

Box intersection(const InstanceTile& a, const InstanceTile& b) {
  const Dims& da = a.labels.dims();
  const Dims& db = b.labels.dims();
  return {{std::max(a.origin.z, b.origin.z), std::max(a.origin.y, b.origin.y), std::max(a.origin.x, b.origin.x)},
          {std::min(a.origin.z + da.depth, b.origin.z + db.depth),
           std::min(a.origin.y + da.height, b.origin.y + db.height),
           std::min(a.origin.x + da.width, b.origin.x + db.width)}};
}

}  // namespace

LabelVolume watershed_fill(const LabelVolume& labels, const MaskVolume& foreground) {
  if (labels.dims() != foreground.dims()) throw std::invalid_argument("watershed_fill: dims mismatch");
  const Dims d = labels.dims();
  LabelVolume out = labels;

  bool any_outlier = false;
  uint32_t max_seed = 0;
  std::vector<size_t> frontier;
  for (size_t i = 0; i < labels.size(); ++i) {
    const uint32_t v = labels[i];
    if (v == kOutlier) {
      if (!foreground[i]) throw std::invalid_argument("watershed_fill: outlier voxel outside the foreground");
      any_outlier = true;
    } else if (v != kBackground) {
      max_seed = std::max(max_seed, v);
      frontier.push_back(i);
    }
  }
  if (!any_outlier) return out;
  if (frontier.empty()) throw UnsegmentableTile("watershed_fill: outliers present but no seed label");

  // Breadth-first flooding one geodesic shell at a time; a voxel first reached
  // in a shell takes the smallest ID among the shell voxels touching it.
  std::vector<uint32_t> candidate(labels.size(), kOutlier);
  std::vector<size_t> next;
  while (!frontier.empty()) {
    next.clear();
    for (size_t i : frontier) {
      const uint32_t id = out[i];
      for_each_neighbour26(d, i, [&](size_t n) {
        if (out[n] != kOutlier) return;
        if (candidate[n] == kOutlier) next.push_back(n);
        candidate[n] = std::min(candidate[n], id);
      });
    }
    for (size_t n : next) out[n] = candidate[n];
    std::sort(next.begin(), next.end());
    frontier.swap(next);
  }

  // Outlier components without any seed become new instances.
  uint32_t fresh = max_seed;
  std::vector<size_t> stack;
  for (size_t i = 0; i < out.size(); ++i) {
    if (out[i] != kOutlier) continue;
    const uint32_t id = ++fresh;
    out[i] = id;
    stack.push_back(i);
    while (!stack.empty()) {
      const size_t p = stack.back();
      stack.pop_back();
      for_each_neighbour26(d, p, [&](size_t n) {
        if (out[n] == kOutlier) {
          out[n] = id;
          stack.push_back(n);
        }
      });
    }
  }
  return out;
}

LabelVolume relabel_sequential(const LabelVolume& labels, size_t* count) {
  std::map<uint32_t, uint32_t> remap;
  LabelVolume out(labels.dims());
  out.voxel_size_um = labels.voxel_size_um;
  for (size_t i = 0; i < labels.size(); ++i) {
    const uint32_t v = labels[i];
    if (v == kBackground || v == kOutlier) {
      out[i] = v;
      continue;
    }
    auto [it, inserted] = remap.emplace(v, static_cast<uint32_t>(remap.size() + 1));
    out[i] = it->second;
  }
  if (count != nullptr) *count = remap.size();
  return out;
}

void MergeParams::validate() const {
  if (alpha < 1) throw ConfigError("merge alpha must be >= 1");
}

void to_json(nlohmann::json& j, const MergeParams& p) { j = {{"alpha", p.alpha}}; }

void from_json(const nlohmann::json& j, MergeParams& p) { p.alpha = j.value("alpha", MergeParams{}.alpha); }

std::vector<OverlapLink> compute_overlap_links(const InstanceTile& a, const InstanceTile& b, size_t index_a,
                                               size_t index_b) {
  const Box box = intersection(a, b);
  if (box.empty()) throw std::invalid_argument("compute_overlap_links: tiles do not overlap");
  std::map<std::pair<uint32_t, uint32_t>, uint64_t> counts;
  for (int64_t z = box.lo.z; z < box.hi.z; ++z) {
    for (int64_t y = box.lo.y; y < box.hi.y; ++y) {
      for (int64_t x = box.lo.x; x < box.hi.x; ++x) {
        const uint32_t la = a.labels(z - a.origin.z, y - a.origin.y, x - a.origin.x);
        const uint32_t lb = b.labels(z - b.origin.z, y - b.origin.y, x - b.origin.x);
        if (la != kBackground && lb != kBackground) ++counts[{la, lb}];
      }
    }
  }
  std::vector<OverlapLink> out;
  out.reserve(counts.size());
  for (const auto& [ids, n] : counts) out.push_back({{index_a, ids.first}, {index_b, ids.second}, n});
  return out;
}

ComponentMap merge_components_union_find(const std::vector<uint32_t>& counts, const std::vector<OverlapLink>& links,
                                         uint64_t alpha) {
  const auto offset = node_offsets(counts);
  const size_t nodes = offset.back();
  DisjointSet dsu(nodes);
  for (const auto& l : links) {
    if (l.affinity > alpha) dsu.unite(node_of(offset, counts, l.f), node_of(offset, counts, l.g));
  }
  std::vector<size_t> component(nodes);
  std::vector<size_t> root_component(nodes, SIZE_MAX);
  size_t next = 0;
  for (size_t v = 0; v < nodes; ++v) {
    const size_t r = dsu.find(v);
    if (root_component[r] == SIZE_MAX) root_component[r] = next++;
    component[v] = root_component[r];
  }
  return to_component_map(counts, component);
}

ComponentMap merge_components_recursive(const std::vector<uint32_t>& counts, const std::vector<OverlapLink>& links,
                                        uint64_t alpha) {
  const auto offset = node_offsets(counts);
  const size_t nodes = offset.back();
  std::vector<std::vector<size_t>> neighbours(nodes);
  for (const auto& l : links) {
    if (l.affinity <= alpha) continue;
    const size_t f = node_of(offset, counts, l.f);
    const size_t g = node_of(offset, counts, l.g);
    neighbours[f].push_back(g);
    neighbours[g].push_back(f);
  }
  std::vector<size_t> id(nodes, SIZE_MAX);
  std::function<void(size_t)> merge = [&](size_t f) {
    for (size_t g : neighbours[f]) {
      if (id[g] != SIZE_MAX) continue;
      id[g] = id[f];
      merge(g);
    }
  };
  size_t next = 0;
  for (size_t v = 0; v < nodes; ++v) {
    if (id[v] != SIZE_MAX) continue;
    id[v] = next++;
    merge(v);
  }
  return to_component_map(counts, id);
}

MergeResult merge_tiles(const std::vector<InstanceTile>& tiles, const TilePlan& plan, const MergeParams& params) {
  params.validate();
  if (tiles.size() != plan.tile_count()) throw std::invalid_argument("merge_tiles: tile count does not match plan");
  std::vector<uint32_t> counts(tiles.size(), 0);
  for (size_t t = 0; t < tiles.size(); ++t) {
    if (tiles[t].origin != plan.origins[t] || tiles[t].labels.dims() != plan.tile_dims()) {
      throw std::invalid_argument("merge_tiles: tile " + std::to_string(t) + " does not match the plan");
    }
    for (uint32_t v : tiles[t].labels.data()) {
      if (v == kOutlier) throw std::invalid_argument("merge_tiles: tile still contains outlier sentinels");
      counts[t] = std::max(counts[t], v);
    }
  }

  std::vector<std::pair<size_t, size_t>> pairs;
  for (size_t a = 0; a < tiles.size(); ++a) {
    for (size_t b = a + 1; b < tiles.size(); ++b) {
      if (!intersection(tiles[a], tiles[b]).empty()) pairs.emplace_back(a, b);
    }
  }
  std::vector<std::vector<OverlapLink>> per_pair(pairs.size());
  parallel_for(pairs.size(), [&](size_t k) {
    const auto [a, b] = pairs[k];
    per_pair[k] = compute_overlap_links(tiles[a], tiles[b], a, b);
  });

  MergeResult result;
  for (auto& links : per_pair) {
    for (auto& l : links) {
      result.accepted.push_back(l.affinity > params.alpha);
      result.links.push_back(l);
    }
  }
  const ComponentMap component = merge_components_union_find(counts, result.links, params.alpha);

  // Owner tile per axis coordinate: nearest tile centre, smaller origin on ties.
  const int64_t T = plan.tile_size;
  std::array<std::vector<int64_t>, 3> owner;
  for (int axis = 0; axis < 3; ++axis) {
    const auto& origins = plan.axis_origins[axis];
    owner[axis].assign(static_cast<size_t>(plan.volume[axis]), -1);
    for (int64_t c = 0; c < plan.volume[axis]; ++c) {
      int64_t best = -1;
      int64_t best_dist = 0;
      for (size_t k = 0; k < origins.size(); ++k) {
        if (c < origins[k] || c >= origins[k] + T) continue;
        const int64_t dist2 = std::abs(2 * c - (2 * origins[k] + T - 1));  // doubled distance to centre
        if (best < 0 || dist2 < best_dist) {
          best = static_cast<int64_t>(k);
          best_dist = dist2;
        }
      }
      if (best < 0) throw std::invalid_argument("merge_tiles: voxel not covered by any tile");
      owner[axis][static_cast<size_t>(c)] = best;
    }
  }
  const auto ny = static_cast<int64_t>(plan.axis_origins[1].size());
  const auto nx = static_cast<int64_t>(plan.axis_origins[2].size());

  LabelVolume painted(plan.volume);
  for (int64_t z = 0; z < plan.volume.depth; ++z) {
    const int64_t iz = owner[0][static_cast<size_t>(z)];
    for (int64_t y = 0; y < plan.volume.height; ++y) {
      const int64_t iy = owner[1][static_cast<size_t>(y)];
      for (int64_t x = 0; x < plan.volume.width; ++x) {
        const int64_t ix = owner[2][static_cast<size_t>(x)];
        const auto t = static_cast<size_t>((iz * ny + iy) * nx + ix);
        const InstanceTile& tile = tiles[t];
        const uint32_t local = tile.labels(z - tile.origin.z, y - tile.origin.y, x - tile.origin.x);
        if (local != kBackground) painted(z, y, x) = component[t][local] + 1;
      }
    }
  }
  result.labels = relabel_sequential(painted, &result.global_count);
  return result;
}

nlohmann::json merge_audit(const MergeResult& result, const std::vector<InstanceTile>& tiles) {
  nlohmann::json links = nlohmann::json::array();
  for (size_t k = 0; k < result.links.size(); ++k) {
    const auto& l = result.links[k];
    const Coord& of = tiles[l.f.tile].origin;
    const Coord& og = tiles[l.g.tile].origin;
    links.push_back({{"tile_f", l.f.tile},
                     {"origin_f", {of.z, of.y, of.x}},
                     {"id_f", l.f.id},
                     {"tile_g", l.g.tile},
                     {"origin_g", {og.z, og.y, og.x}},
                     {"id_g", l.g.id},
                     {"affinity", l.affinity},
                     {"merged", static_cast<bool>(result.accepted[k])}});
  }
  return {{"links", links}, {"global_count", result.global_count}};
}

}  // namespace fiberseg::postprocess
