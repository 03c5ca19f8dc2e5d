#include "fiberseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "fiberseg/errors.hpp"

namespace fiberseg::losses {

namespace {

double norm_of_difference(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

}  // namespace

BceResult bce_loss(std::span<const double> y_hat, std::span<const double> y) {
  if (y_hat.size() != y.size()) throw std::invalid_argument("bce_loss: shape mismatch");
  if (y_hat.empty()) throw std::invalid_argument("bce_loss: empty input");
  BceResult r;
  r.grad.assign(y_hat.size(), 0.0);
  const double n = static_cast<double>(y_hat.size());
  for (size_t i = 0; i < y_hat.size(); ++i) {
    const double p = std::clamp(y_hat[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    r.loss -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
    if (y_hat[i] >= kProbabilityClamp && y_hat[i] <= 1.0 - kProbabilityClamp) {
      r.grad[i] = (-y[i] / p + (1.0 - y[i]) / (1.0 - p)) / n;
    }
  }
  r.loss /= n;
  return r;
}

void EmbeddingLossParams::validate() const {
  if (delta_v < 0.0 || !(delta_d > 0.0)) throw ConfigError("loss margins need delta_v >= 0, delta_d > 0");
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) throw ConfigError("loss weights must be >= 0");
}

void to_json(nlohmann::json& j, const EmbeddingLossParams& p) {
  j = {{"delta_v", p.delta_v}, {"delta_d", p.delta_d}, {"alpha", p.alpha}, {"beta", p.beta}, {"gamma", p.gamma}};
}

void from_json(const nlohmann::json& j, EmbeddingLossParams& p) {
  const EmbeddingLossParams d;
  p.delta_v = j.value("delta_v", d.delta_v);
  p.delta_d = j.value("delta_d", d.delta_d);
  p.alpha = j.value("alpha", d.alpha);
  p.beta = j.value("beta", d.beta);
  p.gamma = j.value("gamma", d.gamma);
}

ClusterStats cluster_stats(const MaskedEmbeddingBatch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("cluster_stats: empty batch");
  if (batch.dim < 1 || batch.embeddings.size() != batch.size() * static_cast<size_t>(batch.dim)) {
    throw std::invalid_argument("cluster_stats: embeddings do not match dim x points");
  }
  std::map<uint32_t, size_t> index;
  for (uint32_t id : batch.instance) index.emplace(id, 0);
  ClusterStats s;
  s.dim = batch.dim;
  for (auto& [id, slot] : index) {
    slot = s.ids.size();
    s.ids.push_back(id);
  }
  const size_t C = s.ids.size();
  const auto D = static_cast<size_t>(batch.dim);
  s.means.assign(C * D, 0.0);
  s.counts.assign(C, 0);
  s.members.resize(C);
  s.cluster_of.resize(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    const size_t c = index[batch.instance[i]];
    s.cluster_of[i] = c;
    s.members[c].push_back(i);
    ++s.counts[c];
    for (size_t k = 0; k < D; ++k) s.means[c * D + k] += batch.point(i)[k];
  }
  for (size_t c = 0; c < C; ++c) {
    for (size_t k = 0; k < D; ++k) s.means[c * D + k] /= static_cast<double>(s.counts[c]);
  }
  return s;
}

TermResult variance_term(const ClusterStats& stats, const MaskedEmbeddingBatch& batch, double delta_v) {
  const size_t C = stats.cluster_count();
  if (C == 0) throw std::invalid_argument("variance_term: no clusters");
  const auto D = static_cast<size_t>(stats.dim);
  TermResult r;
  r.grad.assign(batch.size() * D, 0.0);
  std::vector<double> g(D), gsum(D);
  for (size_t c = 0; c < C; ++c) {
    const double* mu = stats.mean(c);
    const double n_c = static_cast<double>(stats.counts[c]);
    const double w = 1.0 / (static_cast<double>(C) * n_c);
    std::fill(gsum.begin(), gsum.end(), 0.0);
    double cluster_sum = 0.0;
    // g_i = d/d(mu - x_i) of the hinge term; dL/dx_j = w * (mean_i g_i - g_j).
    std::vector<double> per_point(stats.members[c].size() * D, 0.0);
    for (size_t m = 0; m < stats.members[c].size(); ++m) {
      const double* x = batch.point(stats.members[c][m]);
      const double dist = norm_of_difference(mu, x, stats.dim);
      const double hinge = std::max(0.0, dist - delta_v);
      cluster_sum += hinge * hinge;
      if (hinge > 0.0 && dist > 0.0) {
        for (size_t k = 0; k < D; ++k) {
          per_point[m * D + k] = 2.0 * hinge * (mu[k] - x[k]) / dist;
          gsum[k] += per_point[m * D + k];
        }
      }
    }
    r.value += cluster_sum * w;
    for (size_t m = 0; m < stats.members[c].size(); ++m) {
      double* out = r.grad.data() + stats.members[c][m] * D;
      for (size_t k = 0; k < D; ++k) out[k] = w * (gsum[k] / n_c - per_point[m * D + k]);
    }
  }
  return r;
}

TermResult distance_term(const ClusterStats& stats, double delta_d) {
  const size_t C = stats.cluster_count();
  const auto D = static_cast<size_t>(stats.dim);
  TermResult r;
  r.grad.assign(C * D, 0.0);
  if (C < 2) return r;
  const double norm = 1.0 / (static_cast<double>(C) * static_cast<double>(C - 1));
  for (size_t a = 0; a < C; ++a) {
    for (size_t b = 0; b < C; ++b) {
      if (a == b) continue;
      const double dist = norm_of_difference(stats.mean(a), stats.mean(b), stats.dim);
      const double hinge = std::max(0.0, delta_d - dist);
      r.value += norm * hinge * hinge;
      if (hinge > 0.0 && dist > 0.0) {
        // Each ordered pair moves both centres; accumulate the (a, b) term on a and b.
        for (size_t k = 0; k < D; ++k) {
          const double dir = (stats.mean(a)[k] - stats.mean(b)[k]) / dist;
          r.grad[a * D + k] -= norm * 2.0 * hinge * dir;
          r.grad[b * D + k] += norm * 2.0 * hinge * dir;
        }
      }
    }
  }
  return r;
}

TermResult regularization_term(const ClusterStats& stats) {
  const size_t C = stats.cluster_count();
  if (C == 0) throw std::invalid_argument("regularization_term: no clusters");
  const auto D = static_cast<size_t>(stats.dim);
  TermResult r;
  r.grad.assign(C * D, 0.0);
  const std::vector<double> origin(D, 0.0);
  for (size_t c = 0; c < C; ++c) {
    const double n = norm_of_difference(stats.mean(c), origin.data(), stats.dim);
    r.value += n / static_cast<double>(C);
    if (n > 0.0) {
      for (size_t k = 0; k < D; ++k) r.grad[c * D + k] = stats.mean(c)[k] / (n * static_cast<double>(C));
    }
  }
  return r;
}

EmbeddingLossResult embedding_loss(const MaskedEmbeddingBatch& batch, const EmbeddingLossParams& params) {
  params.validate();
  const ClusterStats stats = cluster_stats(batch);
  const auto D = static_cast<size_t>(batch.dim);
  const TermResult lv = variance_term(stats, batch, params.delta_v);
  const TermResult ld = distance_term(stats, params.delta_d);
  const TermResult lr = regularization_term(stats);

  EmbeddingLossResult out;
  out.variance = lv.value;
  out.distance = ld.value;
  out.regularization = lr.value;
  out.clusters = stats.cluster_count();
  out.total = params.alpha * lv.value + params.beta * ld.value + params.gamma * lr.value;
  out.grad.assign(batch.size() * D, 0.0);
  // d mu_c / d x_i = I / N_c for every member i of c.
  for (size_t i = 0; i < batch.size(); ++i) {
    const size_t c = stats.cluster_of[i];
    const double inv_n = 1.0 / static_cast<double>(stats.counts[c]);
    for (size_t k = 0; k < D; ++k) {
      out.grad[i * D + k] = params.alpha * lv.grad[i * D + k] +
                            inv_n * (params.beta * ld.grad[c * D + k] + params.gamma * lr.grad[c * D + k]);
    }
  }
  return out;
}

}  // namespace fiberseg::losses
