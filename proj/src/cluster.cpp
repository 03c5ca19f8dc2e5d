#include "fiberseg/cluster.hpp"

#include <deque>
#include <fstream>
#include <stdexcept>

#include "fiberseg/errors.hpp"
#include "fiberseg/simd/kernels.hpp"

namespace fiberseg::cluster {

void DbscanParams::validate() const {
  if (!(eps > 0.0)) throw ConfigError("dbscan eps must be > 0");
  if (min_pts < 1) throw ConfigError("dbscan min_pts must be >= 1");
  if (!(spatial_scale >= 0.0)) throw ConfigError("dbscan spatial_scale must be >= 0");
}

void to_json(nlohmann::json& j, const DbscanParams& p) {
  j = {{"eps", p.eps}, {"min_pts", p.min_pts}, {"spatial_scale", p.spatial_scale}};
}

void from_json(const nlohmann::json& j, DbscanParams& p) {
  const DbscanParams d;
  p.eps = j.value("eps", d.eps);
  p.min_pts = j.value("min_pts", d.min_pts);
  p.spatial_scale = j.value("spatial_scale", d.spatial_scale);
}

namespace {

template <typename Pred>
EmbeddedPointSet collect(const nn::FeatureMap& embedding, const Dims& dims, Pred selected) {
  if (embedding.batch != 1 || embedding.dims != dims) {
    throw std::invalid_argument("mask_embeddings: embedding and mask are not aligned");
  }
  EmbeddedPointSet out;
  out.dim = embedding.channels;
  const int64_t plane = dims.height * dims.width;
  for (int64_t i = 0; i < dims.size(); ++i) {
    if (!selected(static_cast<size_t>(i))) continue;
    out.coords.push_back({i / plane, (i % plane) / dims.width, i % dims.width});
    for (int c = 0; c < embedding.channels; ++c) out.values.push_back(embedding.channel(0, c)[i]);
  }
  return out;
}

}  // namespace

EmbeddedPointSet mask_embeddings(const nn::FeatureMap& embedding, const ScalarVolume& foreground_probability,
                                 double threshold) {
  return collect(embedding, foreground_probability.dims(),
                 [&](size_t i) { return foreground_probability[i] > threshold; });
}

EmbeddedPointSet mask_embeddings(const nn::FeatureMap& embedding, const MaskVolume& mask) {
  return collect(embedding, mask.dims(), [&](size_t i) { return mask[i] != 0; });
}

std::vector<uint32_t> dbscan(const EmbeddedPointSet& input, const DbscanParams& params) {
  params.validate();
  EmbeddedPointSet augmented;
  if (params.spatial_scale > 0.0) {
    augmented.dim = input.dim + 3;
    augmented.coords = input.coords;
    for (size_t i = 0; i < input.size(); ++i) {
      augmented.values.insert(augmented.values.end(), input.point(i), input.point(i) + input.dim);
      const Coord& c = input.coords[i];
      for (int64_t v : {c.z, c.y, c.x}) augmented.values.push_back(params.spatial_scale * static_cast<double>(v));
    }
  }
  const EmbeddedPointSet& points = params.spatial_scale > 0.0 ? augmented : input;
  const size_t n = points.size();
  const auto& kernels = simd::active();
  const double eps2 = params.eps * params.eps;
  const auto dim = static_cast<size_t>(points.dim);

  // Exact eps-neighbourhoods (self included); brute force is the right index
  // for a few thousand points in 16 dimensions.
  std::vector<std::vector<uint32_t>> neighbours(n);
  for (size_t i = 0; i < n; ++i) {
    neighbours[i].push_back(static_cast<uint32_t>(i));
    for (size_t j = i + 1; j < n; ++j) {
      if (kernels.squared_distance(points.point(i), points.point(j), dim) <= eps2) {
        neighbours[i].push_back(static_cast<uint32_t>(j));
        neighbours[j].push_back(static_cast<uint32_t>(i));
      }
    }
  }
  std::vector<uint8_t> core(n);
  for (size_t i = 0; i < n; ++i) core[i] = neighbours[i].size() >= static_cast<size_t>(params.min_pts);

  std::vector<uint32_t> label(n, kOutlier);
  uint32_t next = 0;
  std::deque<uint32_t> queue;
  for (size_t seed = 0; seed < n; ++seed) {
    if (!core[seed] || label[seed] != kOutlier) continue;
    const uint32_t id = ++next;
    label[seed] = id;
    queue.push_back(static_cast<uint32_t>(seed));
    while (!queue.empty()) {
      const uint32_t p = queue.front();
      queue.pop_front();
      for (uint32_t q : neighbours[p]) {
        if (label[q] != kOutlier) continue;
        label[q] = id;
        if (core[q]) queue.push_back(q);
      }
    }
  }
  return label;
}

LabelVolume assignments_to_volume(const EmbeddedPointSet& points, const std::vector<uint32_t>& labels,
                                  const Dims& dims) {
  if (labels.size() != points.size()) throw std::invalid_argument("assignments_to_volume: label count mismatch");
  LabelVolume out(dims);
  for (size_t i = 0; i < points.size(); ++i) {
    const Coord& c = points.coords[i];
    if (!out.contains(c.z, c.y, c.x)) throw std::out_of_range("assignments_to_volume: coordinate outside tile");
    out(c.z, c.y, c.x) = labels[i];
  }
  return out;
}

void write_embedding_csv(const std::filesystem::path& path, const EmbeddedPointSet& points,
                         const std::vector<uint32_t>& labels, const Coord& origin) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "z,y,x";
  for (int k = 0; k < points.dim; ++k) os << ",e" << (k + 1);
  os << ",cluster\n";
  os.precision(9);
  for (size_t i = 0; i < points.size(); ++i) {
    const Coord& c = points.coords[i];
    os << origin.z + c.z << ',' << origin.y + c.y << ',' << origin.x + c.x;
    for (int k = 0; k < points.dim; ++k) os << ',' << points.point(i)[k];
    os << ',' << (labels[i] == kOutlier ? -1 : static_cast<int64_t>(labels[i])) << '\n';
  }
}

}  // namespace fiberseg::cluster
