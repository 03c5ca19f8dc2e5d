#pragma once

// Training objectives: voxel-wise binary cross entropy and the three-term
// discriminative embedding loss (pull to centre, push centres apart,
// keep centres near the origin), with exact analytic gradients.

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

namespace fiberseg::losses {

inline constexpr double kProbabilityClamp = 1e-7;

struct BceResult {
  double loss = 0.0;
  std::vector<double> grad;  // dL/d(y_hat)
};

/// Mean over voxels of -[y log(y_hat) + (1 - y) log(1 - y_hat)], y_hat clamped to [eps, 1 - eps].
BceResult bce_loss(std::span<const double> y_hat, std::span<const double> y);

struct EmbeddingLossParams {
  double delta_v = 0.5;
  double delta_d = 1.5;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.001;

  void validate() const;
};

void to_json(nlohmann::json& j, const EmbeddingLossParams& p);
void from_json(const nlohmann::json& j, EmbeddingLossParams& p);

/// Foreground embeddings (row-major, n x dim) with their ground-truth instance IDs.
struct MaskedEmbeddingBatch {
  int dim = 0;
  std::vector<double> embeddings;
  std::vector<uint32_t> instance;

  size_t size() const { return instance.size(); }
  const double* point(size_t i) const { return embeddings.data() + i * static_cast<size_t>(dim); }
};

struct ClusterStats {
  int dim = 0;
  std::vector<uint32_t> ids;                  // ascending instance IDs
  std::vector<double> means;                  // C x dim
  std::vector<size_t> counts;                 // N_c
  std::vector<std::vector<size_t>> members;   // point indices
  std::vector<size_t> cluster_of;             // per point: index into ids

  size_t cluster_count() const { return ids.size(); }
  const double* mean(size_t c) const { return means.data() + c * static_cast<size_t>(dim); }
};

ClusterStats cluster_stats(const MaskedEmbeddingBatch& batch);

struct TermResult {
  double value = 0.0;
  std::vector<double> grad;  // w.r.t. points (n x dim) or centres (C x dim)
};

/// Mean over clusters of the mean squared hinge [||mu_c - x_i|| - delta_v]_+^2.
/// The gradient is w.r.t. the points, differentiating through mu_c as well.
TermResult variance_term(const ClusterStats& stats, const MaskedEmbeddingBatch& batch, double delta_v);

/// Squared hinge [delta_d - ||mu_A - mu_B||]_+^2 averaged over ordered pairs A != B;
/// zero when fewer than two clusters. Gradient w.r.t. centres.
TermResult distance_term(const ClusterStats& stats, double delta_d);

/// Mean centre norm. Gradient w.r.t. centres, 0 at the origin.
TermResult regularization_term(const ClusterStats& stats);

struct EmbeddingLossResult {
  double total = 0.0;
  double variance = 0.0;
  double distance = 0.0;
  double regularization = 0.0;
  size_t clusters = 0;
  std::vector<double> grad;  // dL/dx, n x dim
};

EmbeddingLossResult embedding_loss(const MaskedEmbeddingBatch& batch, const EmbeddingLossParams& params);

}  // namespace fiberseg::losses
