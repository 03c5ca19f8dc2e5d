#pragma once

// Dense 3D grids in z-major order (depth slowest, width fastest), tiling
// with overlap, and cube-isometry augmentation.

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fiberseg/errors.hpp"

namespace fiberseg {

struct Dims {
  int64_t depth = 0;
  int64_t height = 0;
  int64_t width = 0;

  constexpr int64_t size() const { return depth * height * width; }
  constexpr int64_t operator[](int axis) const {
    return axis == 0 ? depth : (axis == 1 ? height : width);
  }
  constexpr bool operator==(const Dims&) const = default;
  constexpr bool positive() const { return depth > 0 && height > 0 && width > 0; }
  constexpr bool is_cube() const { return depth == height && height == width; }

  static constexpr Dims cube(int64_t n) { return {n, n, n}; }
};

struct Coord {
  int64_t z = 0;
  int64_t y = 0;
  int64_t x = 0;

  constexpr int64_t operator[](int axis) const { return axis == 0 ? z : (axis == 1 ? y : x); }
  constexpr auto operator<=>(const Coord&) const = default;
};

std::string to_string(const Dims& d);

template <typename T>
class Volume {
 public:
  using value_type = T;

  Volume() = default;

  explicit Volume(Dims dims, T fill = T{}) : dims_(dims) {
    if (dims.depth < 0 || dims.height < 0 || dims.width < 0) {
      throw std::invalid_argument("negative volume dimension " + to_string(dims));
    }
    data_.assign(static_cast<size_t>(dims.size()), fill);
  }

  Volume(Dims dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != dims.size()) {
      throw FormatError("payload holds " + std::to_string(data_.size()) +
                        " values but dims " + to_string(dims) + " require " +
                        std::to_string(dims.size()));
    }
  }

  const Dims& dims() const { return dims_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  size_t index(int64_t z, int64_t y, int64_t x) const {
    return static_cast<size_t>((z * dims_.height + y) * dims_.width + x);
  }
  size_t index(const Coord& c) const { return index(c.z, c.y, c.x); }

  Coord coord(size_t i) const {
    const auto idx = static_cast<int64_t>(i);
    const int64_t plane = dims_.height * dims_.width;
    return {idx / plane, (idx % plane) / dims_.width, idx % dims_.width};
  }

  bool contains(int64_t z, int64_t y, int64_t x) const {
    return z >= 0 && y >= 0 && x >= 0 && z < dims_.depth && y < dims_.height && x < dims_.width;
  }

  T& operator()(int64_t z, int64_t y, int64_t x) { return data_[index(z, y, x)]; }
  const T& operator()(int64_t z, int64_t y, int64_t x) const { return data_[index(z, y, x)]; }
  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  bool operator==(const Volume& other) const {
    return dims_ == other.dims_ && data_ == other.data_;
  }

  double voxel_size_um = 1.0;

 private:
  Dims dims_;
  std::vector<T> data_;
};

using ScalarVolume = Volume<float>;
using LabelVolume = Volume<uint32_t>;
using MaskVolume = Volume<uint8_t>;

inline constexpr uint32_t kBackground = 0;
inline constexpr uint32_t kOutlier = std::numeric_limits<uint32_t>::max();

/// Copies the box [origin, origin + size) out of `v`. The box must lie inside.
template <typename T>
Volume<T> crop(const Volume<T>& v, const Coord& origin, const Dims& size) {
  if (origin.z < 0 || origin.y < 0 || origin.x < 0 || origin.z + size.depth > v.dims().depth ||
      origin.y + size.height > v.dims().height || origin.x + size.width > v.dims().width) {
    throw std::out_of_range("crop box outside volume " + to_string(v.dims()));
  }
  Volume<T> out(size);
  for (int64_t z = 0; z < size.depth; ++z) {
    for (int64_t y = 0; y < size.height; ++y) {
      const T* src = &v(origin.z + z, origin.y + y, origin.x);
      std::copy(src, src + size.width, &out(z, y, 0));
    }
  }
  out.voxel_size_um = v.voxel_size_um;
  return out;
}

/// Zero-mean, unit population-variance copy. Throws DegenerateInput on constant input.
ScalarVolume normalize_volume(const ScalarVolume& v);

/// 1 where v > thr, else 0.
MaskVolume threshold_air_mask(const ScalarVolume& v, double thr);

MaskVolume foreground_of(const LabelVolume& labels);

// ---------------------------------------------------------------------------
// Tiling

struct TilePlan {
  int64_t tile_size = 32;
  int64_t stride = 16;
  Dims volume;
  std::array<std::vector<int64_t>, 3> axis_origins;
  std::vector<Coord> origins;  // z-major Cartesian product of axis_origins

  Dims tile_dims() const { return Dims::cube(tile_size); }
  size_t tile_count() const { return origins.size(); }
};

/// Tiles of edge `tile_size` with `overlap` voxels shared between neighbours.
/// The last tile on each axis is clamped flush with the boundary.
TilePlan make_tile_plan(const Dims& dims, int64_t tile_size = 32, int64_t overlap = 16);

// ---------------------------------------------------------------------------
// Augmentation: the 48 isometries of the cube (axis permutations x flips).

struct CubeIsometry {
  // Output axis a reads input axis perm[a], mirrored when flip[a] is set.
  std::array<int, 3> perm{0, 1, 2};
  std::array<bool, 3> flip{false, false, false};

  bool is_identity() const;
  CubeIsometry inverse() const;
  /// (this * other): apply `other` first, then `this`.
  CubeIsometry compose(const CubeIsometry& other) const;
  bool operator==(const CubeIsometry&) const = default;

  static CubeIsometry from_index(int index);  // 0..47, 0 is the identity
  static CubeIsometry rotation_z(int quarter_turns);
};

template <typename T>
Volume<T> apply_isometry(const Volume<T>& v, const CubeIsometry& iso) {
  const Dims& d = v.dims();
  if (!iso.is_identity() && !d.is_cube()) {
    throw std::invalid_argument("augmentation requires a cubic tile, got " + to_string(d));
  }
  const int64_t n = d.depth;
  Volume<T> out(d);
  out.voxel_size_um = v.voxel_size_um;
  std::array<int64_t, 3> o{};
  std::array<int64_t, 3> in{};
  for (o[0] = 0; o[0] < d.depth; ++o[0]) {
    for (o[1] = 0; o[1] < d.height; ++o[1]) {
      for (o[2] = 0; o[2] < d.width; ++o[2]) {
        for (int a = 0; a < 3; ++a) {
          in[iso.perm[a]] = iso.flip[a] ? n - 1 - o[a] : o[a];
        }
        out(o[0], o[1], o[2]) = v(in[0], in[1], in[2]);
      }
    }
  }
  return out;
}

class Rng;

/// Uniform draw over all 48 cube isometries.
CubeIsometry draw_isometry(Rng& rng);

}  // namespace fiberseg
