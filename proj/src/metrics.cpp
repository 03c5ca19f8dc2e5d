#include "fiberseg/metrics.hpp"

#include <set>
#include <stdexcept>
#include <unordered_map>

#include "fiberseg/errors.hpp"

namespace fiberseg::metrics {

namespace {

using u128 = unsigned __int128;
using i128 = __int128;

u128 pairs(uint64_t k) { return k < 2 ? 0 : static_cast<u128>(k) * (k - 1) / 2; }

}  // namespace

ContingencyTable::ContingencyTable(std::span<const uint32_t> truth, std::span<const uint32_t> predicted) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("contingency: label counts differ");
  std::unordered_map<uint64_t, uint64_t> cells;
  std::unordered_map<uint32_t, uint64_t> rows, cols;
  for (size_t i = 0; i < truth.size(); ++i) {
    ++cells[(static_cast<uint64_t>(truth[i]) << 32) | predicted[i]];
    ++rows[truth[i]];
    ++cols[predicted[i]];
  }
  n_ = truth.size();
  for (const auto& [k, m] : cells) cells_ += pairs(m);
  for (const auto& [k, m] : rows) t1_ += pairs(m);
  for (const auto& [k, m] : cols) t2_ += pairs(m);
}

double ContingencyTable::adjusted_rand_index() const {
  if (n_ < 2) throw DegenerateInput("ARI needs at least two evaluated voxels");
  // Multiply numerator and denominator by 2 n (n-1) to stay in integers.
  const i128 nn = static_cast<i128>(n_) * static_cast<i128>(n_ - 1);
  const i128 t1 = static_cast<i128>(t1_), t2 = static_cast<i128>(t2_);
  const i128 num = 2 * static_cast<i128>(cells_) * nn - 4 * t1 * t2;
  const i128 den = (t1 + t2) * nn - 4 * t1 * t2;
  if (den == 0) return 1.0;
  if (num == den) return 1.0;
  return static_cast<double>(static_cast<long double>(num) / static_cast<long double>(den));
}

double adjusted_rand_index(std::span<const uint32_t> truth, std::span<const uint32_t> predicted) {
  return ContingencyTable(truth, predicted).adjusted_rand_index();
}

double adjusted_rand_index(const LabelVolume& truth, const LabelVolume& predicted, const MaskVolume& eval_mask) {
  if (truth.dims() != predicted.dims() || truth.dims() != eval_mask.dims()) {
    throw std::invalid_argument("adjusted_rand_index: dims mismatch");
  }
  std::vector<uint32_t> a, b;
  for (size_t i = 0; i < truth.size(); ++i) {
    if (!eval_mask[i]) continue;
    a.push_back(truth[i]);
    b.push_back(predicted[i]);
  }
  if (a.empty()) throw DegenerateInput("adjusted_rand_index: empty evaluation mask");
  return adjusted_rand_index(a, b);
}

double adjusted_rand_index(const LabelVolume& truth, const LabelVolume& predicted) {
  return adjusted_rand_index(truth, predicted, foreground_of(truth));
}

double dice(const MaskVolume& a, const MaskVolume& b) {
  if (a.dims() != b.dims()) throw std::invalid_argument("dice: dims mismatch");
  uint64_t sa = 0, sb = 0, both = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    sa += x;
    sb += y;
    both += x && y;
  }
  if (sa + sb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(sa + sb);
}

size_t instance_count(const LabelVolume& labels) {
  std::set<uint32_t> ids;
  for (uint32_t v : labels.data()) {
    if (v != kBackground && v != kOutlier) ids.insert(v);
  }
  return ids.size();
}

nlohmann::json to_json(const EvaluationReport& r) {
  return {{"mean_ari", r.mean_ari},       {"merged_ari", r.merged_ari},
          {"dice", r.dice},               {"n_tiles", r.n_tiles},
          {"n_skipped_tiles", r.n_skipped_tiles}, {"gt_instances", r.gt_instances},
          {"pred_instances", r.pred_instances},   {"method", r.method},
          {"config_hash", r.config_hash}};
}

EvaluationReport evaluate_report(const LabelVolume& truth, const std::vector<postprocess::InstanceTile>& tiles,
                                 const LabelVolume& merged, const MaskVolume& semantic_mask) {
  EvaluationReport r;
  double sum = 0.0;
  size_t scored = 0;
  for (const auto& tile : tiles) {
    ++r.n_tiles;
    const LabelVolume gt_tile = crop(truth, tile.origin, tile.labels.dims());
    std::vector<uint32_t> a, b;
    for (size_t i = 0; i < gt_tile.size(); ++i) {
      if (gt_tile[i] == kBackground) continue;
      a.push_back(gt_tile[i]);
      b.push_back(tile.labels[i]);
    }
    if (a.size() < 2) {
      ++r.n_skipped_tiles;
      continue;
    }
    sum += adjusted_rand_index(a, b);
    ++scored;
  }
  r.mean_ari = scored > 0 ? sum / static_cast<double>(scored) : 0.0;
  r.merged_ari = adjusted_rand_index(truth, merged);
  r.dice = dice(foreground_of(truth), semantic_mask);
  r.gt_instances = instance_count(truth);
  r.pred_instances = instance_count(merged);
  return r;
}

}  // namespace fiberseg::metrics
