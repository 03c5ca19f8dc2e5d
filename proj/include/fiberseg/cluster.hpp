#pragma once

// Prediction-time clustering: foreground embeddings -> DBSCAN -> label tile.

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "fiberseg/nn.hpp"
#include "fiberseg/volume.hpp"

namespace fiberseg::cluster {

/// Foreground voxels (lexicographic z, y, x order) with their embedding vectors.
struct EmbeddedPointSet {
  int dim = 0;
  std::vector<Coord> coords;
  std::vector<double> values;  // n x dim

  size_t size() const { return coords.size(); }
  const double* point(size_t i) const { return values.data() + i * static_cast<size_t>(dim); }
};

struct DbscanParams {
  double eps = 0.5;
  int min_pts = 8;  // neighbourhood size including the point itself
  // > 0: voxel coordinates times this factor are appended to each embedding
  // before clustering. 0 clusters in the embedding space alone.
  double spatial_scale = 0.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const DbscanParams& p);
void from_json(const nlohmann::json& j, DbscanParams& p);

/// Voxels whose foreground probability exceeds `threshold`. `embedding` must be a
/// single-sample map aligned with `foreground_probability`.
EmbeddedPointSet mask_embeddings(const nn::FeatureMap& embedding, const ScalarVolume& foreground_probability,
                                 double threshold = 0.5);

/// Same, selecting the voxels set in a binary mask.
EmbeddedPointSet mask_embeddings(const nn::FeatureMap& embedding, const MaskVolume& mask);

/// Exact DBSCAN in Euclidean embedding space. Returns 1..K per point, or
/// kOutlier. Clusters are numbered by their first core point in input order;
/// a border point joins the earliest-numbered cluster that reaches it.
std::vector<uint32_t> dbscan(const EmbeddedPointSet& points, const DbscanParams& params);

/// Cluster k -> ID k at its voxel, outliers -> kOutlier, everything else 0.
LabelVolume assignments_to_volume(const EmbeddedPointSet& points, const std::vector<uint32_t>& labels,
                                  const Dims& dims);

/// CSV rows "z,y,x,e1..eD,cluster" (cluster -1 for outliers).
void write_embedding_csv(const std::filesystem::path& path, const EmbeddedPointSet& points,
                         const std::vector<uint32_t>& labels, const Coord& origin = {});

}  // namespace fiberseg::cluster
