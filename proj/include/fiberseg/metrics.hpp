#pragma once

// Adjusted Rand Index over foreground voxels and Dice overlap.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fiberseg/postprocess.hpp"
#include "fiberseg/volume.hpp"

namespace fiberseg::metrics {

/// Contingency counts of two labelings; binomial sums are exact integers.
class ContingencyTable {
 public:
  ContingencyTable(std::span<const uint32_t> truth, std::span<const uint32_t> predicted);

  uint64_t n() const { return n_; }
  unsigned __int128 sum_pairs_cells() const { return cells_; }  // sum_ij C(m_ij, 2)
  unsigned __int128 sum_pairs_truth() const { return t1_; }     // t1
  unsigned __int128 sum_pairs_predicted() const { return t2_; } // t2

  /// (sum_ij C(m_ij,2) - t3) / ((t1 + t2)/2 - t3), t3 = 2 t1 t2 / (n (n-1)),
  /// evaluated as one division of exact integers. 1.0 when the denominator vanishes.
  double adjusted_rand_index() const;

 private:
  uint64_t n_ = 0;
  unsigned __int128 cells_ = 0, t1_ = 0, t2_ = 0;
};

/// ARI over voxels where eval_mask is set. Throws DegenerateInput when fewer than two voxels are evaluated.
double adjusted_rand_index(const LabelVolume& truth, const LabelVolume& predicted, const MaskVolume& eval_mask);

/// ARI over the ground-truth foreground (truth > 0).
double adjusted_rand_index(const LabelVolume& truth, const LabelVolume& predicted);

double adjusted_rand_index(std::span<const uint32_t> truth, std::span<const uint32_t> predicted);

/// 2|A & B| / (|A| + |B|); 1 when both masks are empty.
double dice(const MaskVolume& a, const MaskVolume& b);

size_t instance_count(const LabelVolume& labels);

struct EvaluationReport {
  double mean_ari = 0.0;
  double merged_ari = 0.0;
  double dice = 0.0;
  size_t n_tiles = 0;
  size_t n_skipped_tiles = 0;
  size_t gt_instances = 0;
  size_t pred_instances = 0;
  std::string method;
  std::string config_hash;
};

nlohmann::json to_json(const EvaluationReport& r);

/// Mean per-tile ARI (each tile against the ground truth crop, masked by its
/// foreground; tiles with < 2 such voxels are skipped), merged ARI, and Dice of
/// the semantic mask.
EvaluationReport evaluate_report(const LabelVolume& truth, const std::vector<postprocess::InstanceTile>& tiles,
                                 const LabelVolume& merged, const MaskVolume& semantic_mask);

}  // namespace fiberseg::metrics
