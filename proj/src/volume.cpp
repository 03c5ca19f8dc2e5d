#include "fiberseg/volume.hpp"

#include <algorithm>
#include <cmath>

#include "fiberseg/random.hpp"

namespace fiberseg {

std::string to_string(const Dims& d) {
  return std::to_string(d.depth) + "x" + std::to_string(d.height) + "x" + std::to_string(d.width);
}

ScalarVolume normalize_volume(const ScalarVolume& v) {
  if (v.empty()) throw std::invalid_argument("normalize_volume: empty volume");
  const auto values = v.data();
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (float f : values) mean += f;
  mean /= n;
  double var = 0.0;
  for (float f : values) {
    const double d = f - mean;
    var += d * d;
  }
  var /= n;
  const double sd = std::sqrt(var);
  if (!(sd > 0.0)) throw DegenerateInput("normalize_volume: input has zero variance");

  ScalarVolume out(v.dims());
  out.voxel_size_um = v.voxel_size_um;
  for (size_t i = 0; i < values.size(); ++i) {
    out[i] = static_cast<float>((values[i] - mean) / sd);
  }
  return out;
}

MaskVolume threshold_air_mask(const ScalarVolume& v, double thr) {
  if (!std::isfinite(thr)) throw std::invalid_argument("threshold_air_mask: non-finite threshold");
  MaskVolume out(v.dims());
  out.voxel_size_um = v.voxel_size_um;
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] > thr ? 1 : 0;
  return out;
}

MaskVolume foreground_of(const LabelVolume& labels) {
  MaskVolume out(labels.dims());
  out.voxel_size_um = labels.voxel_size_um;
  for (size_t i = 0; i < labels.size(); ++i) out[i] = labels[i] != kBackground ? 1 : 0;
  return out;
}

TilePlan make_tile_plan(const Dims& dims, int64_t tile_size, int64_t overlap) {
  if (tile_size <= 0) throw std::invalid_argument("tile size must be positive");
  if (overlap < 0 || overlap >= tile_size) {
    throw std::invalid_argument("overlap must satisfy 0 <= overlap < tile_size");
  }
  if (!dims.positive()) throw std::invalid_argument("volume dims must be positive");

  TilePlan plan;
  plan.tile_size = tile_size;
  plan.stride = tile_size - overlap;
  plan.volume = dims;
  for (int axis = 0; axis < 3; ++axis) {
    const int64_t extent = dims[axis];
    if (extent < tile_size) {
      throw std::invalid_argument("volume extent " + std::to_string(extent) + " on axis " +
                                  std::to_string(axis) + " is smaller than the tile size " +
                                  std::to_string(tile_size) + "; pad the volume first");
    }
    auto& o = plan.axis_origins[axis];
    for (int64_t start = 0; start + tile_size < extent; start += plan.stride) o.push_back(start);
    if (o.empty() || o.back() != extent - tile_size) o.push_back(extent - tile_size);
  }
  for (int64_t z : plan.axis_origins[0]) {
    for (int64_t y : plan.axis_origins[1]) {
      for (int64_t x : plan.axis_origins[2]) plan.origins.push_back({z, y, x});
    }
  }
  return plan;
}

bool CubeIsometry::is_identity() const {
  return perm == std::array<int, 3>{0, 1, 2} && !flip[0] && !flip[1] && !flip[2];
}

CubeIsometry CubeIsometry::inverse() const {
  CubeIsometry inv;
  for (int a = 0; a < 3; ++a) {
    inv.perm[perm[a]] = a;
    inv.flip[perm[a]] = flip[a];
  }
  return inv;
}

CubeIsometry CubeIsometry::compose(const CubeIsometry& other) const {
  CubeIsometry c;
  for (int a = 0; a < 3; ++a) {
    c.perm[a] = other.perm[perm[a]];
    c.flip[a] = flip[a] != other.flip[perm[a]];
  }
  return c;
}

CubeIsometry CubeIsometry::from_index(int index) {
  static constexpr std::array<std::array<int, 3>, 6> kPerms{
      {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
  if (index < 0 || index >= 48) throw std::out_of_range("cube isometry index must be in [0, 48)");
  CubeIsometry iso;
  iso.perm = kPerms[static_cast<size_t>(index / 8)];
  const int bits = index % 8;
  for (int a = 0; a < 3; ++a) iso.flip[a] = (bits >> a) & 1;
  return iso;
}

CubeIsometry CubeIsometry::rotation_z(int quarter_turns) {
  CubeIsometry quarter;
  quarter.perm = {0, 2, 1};
  quarter.flip = {false, true, false};
  CubeIsometry r;
  const int k = ((quarter_turns % 4) + 4) % 4;
  for (int i = 0; i < k; ++i) r = quarter.compose(r);
  return r;
}

CubeIsometry draw_isometry(Rng& rng) {
  return CubeIsometry::from_index(static_cast<int>(rng.uniform_int(48)));
}

}  // namespace fiberseg
