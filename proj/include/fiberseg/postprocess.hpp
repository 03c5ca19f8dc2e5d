#pragma once

// Outlier filling by seeded watershed and merging of per-tile instance
// labelings into one volume.

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "fiberseg/volume.hpp"

namespace fiberseg::postprocess {

/// Grows seed labels over `foreground` (26-connected, unit step cost) into
/// every kOutlier voxel. Each outlier receives the seed ID at the smallest
/// geodesic distance, ties going to the smaller ID. Outlier components that no
/// seed can reach receive fresh IDs above the largest seed, in scan order.
///
/// Throws std::invalid_argument if an outlier lies outside the foreground and
/// UnsegmentableTile if outliers exist but there is no seed at all.
LabelVolume watershed_fill(const LabelVolume& labels, const MaskVolume& foreground);

/// Renumbers non-zero IDs to 1..K in order of first appearance (z-major scan).
LabelVolume relabel_sequential(const LabelVolume& labels, size_t* count = nullptr);

struct InstanceTile {
  Coord origin;
  LabelVolume labels;  // local IDs, no kOutlier
};

struct TileFiber {
  size_t tile = 0;
  uint32_t id = 0;

  auto operator<=>(const TileFiber&) const = default;
};

/// Overlap evidence between fiber f of one tile and fiber g of another:
/// the number of global voxels both tiles assign to them.
struct OverlapLink {
  TileFiber f;
  TileFiber g;
  uint64_t affinity = 0;
};

struct MergeParams {
  uint64_t alpha = 3;  // union when affinity > alpha

  void validate() const;
};

void to_json(nlohmann::json& j, const MergeParams& p);
void from_json(const nlohmann::json& j, MergeParams& p);

/// Links for every (f, g) pair co-occupying at least one voxel of the overlap,
/// sorted by (f.id, g.id). Throws if the tiles do not intersect.
std::vector<OverlapLink> compute_overlap_links(const InstanceTile& a, const InstanceTile& b,
                                               size_t index_a = 0, size_t index_b = 1);

/// Nodes are (tile, local ID) with local IDs 1..counts[tile]; returns, for each
/// tile, a component index per local ID (slot 0 unused). Components are
/// numbered by their smallest node in (tile, ID) order.
using ComponentMap = std::vector<std::vector<uint32_t>>;

ComponentMap merge_components_union_find(const std::vector<uint32_t>& counts,
                                         const std::vector<OverlapLink>& links, uint64_t alpha);

/// Literal recursive form of the greedy merge: each fiber visits every
/// neighbouring fiber whose affinity exceeds alpha and pulls it into its ID.
ComponentMap merge_components_recursive(const std::vector<uint32_t>& counts,
                                        const std::vector<OverlapLink>& links, uint64_t alpha);

struct MergeResult {
  LabelVolume labels;
  std::vector<OverlapLink> links;
  std::vector<bool> accepted;  // per link: affinity > alpha
  size_t global_count = 0;
};

/// Unions per-tile fibers over the overlap graph and paints each voxel from
/// the tile whose centre is nearest (ties: smaller origin).
MergeResult merge_tiles(const std::vector<InstanceTile>& tiles, const TilePlan& plan, const MergeParams& params);

nlohmann::json merge_audit(const MergeResult& result, const std::vector<InstanceTile>& tiles);

}  // namespace fiberseg::postprocess
