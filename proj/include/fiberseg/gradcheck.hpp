#pragma once

// Central finite-difference checks of every hand-written gradient: the loss
// terms, conv3d, batch norm, the residual block and the whole two-branch
// network on a tiny configuration.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace fiberseg::gradcheck {

struct Options {
  uint64_t seed = 7;
  double h = 1e-5;
  /// Test hook: name of an op (or "all") whose analytic gradient is perturbed before comparison.
  std::string corrupt;
};

struct OpResult {
  std::string op;
  double max_rel_error = 0.0;
  double threshold = 0.0;
  size_t checked = 0;
  std::string worst;  // which tensor/entry produced max_rel_error

  bool passed() const { return max_rel_error < threshold; }
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true gradient
/// is zero (inactive hinges) from dividing roundoff by zero.
double relative_error(double analytic, double numeric, double floor = 1e-4);

/// Ops in a fixed order: bce, variance, distance, regularization, embedding_loss,
/// conv3d, conv3d_1x1_bias, batchnorm, residual_block, network.
std::vector<OpResult> run_all(const Options& opts);

nlohmann::json to_json(const std::vector<OpResult>& results);

}  // namespace fiberseg::gradcheck
