#pragma once

// Synthetic fiber-composite volumes: straight capsules with known instance
// labels, degraded by a Gaussian point-spread and additive noise.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fiberseg/volume.hpp"

namespace fiberseg {

using Vec3 = std::array<double, 3>;  // (z, y, x) in voxel units

struct PhantomConfig {
  Dims dims = Dims::cube(64);
  int fiber_count = 25;
  double radius_min_vox = 1.0;
  double radius_max_vox = 1.5;
  double length_min_vox = 24.0;
  double length_max_vox = 56.0;
  Vec3 principal_axis{0.0, 0.0, 1.0};
  double orientation_cone_deg = 60.0;
  double noise_sigma = 0.05;
  double blur_sigma_vox = 0.6;
  double min_clearance_vox = 0.0;
  int max_attempts_per_fiber = 500;
  double voxel_size_um = 3.9;
  uint64_t seed = 42;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

void to_json(nlohmann::json& j, const PhantomConfig& c);
void from_json(const nlohmann::json& j, PhantomConfig& c);

struct FiberSpec {
  Vec3 a{};
  Vec3 b{};
  double radius = 1.0;
};

struct Phantom {
  ScalarVolume raw;
  LabelVolume gt;
  MaskVolume mask;
  std::vector<FiberSpec> fibers;  // fibers[k] carries ID k + 1
};

/// Linear indices of voxel centres within `radius` of segment ab.
std::vector<size_t> rasterize_capsule(const Dims& dims, const Vec3& a, const Vec3& b,
                                      double radius);

double distance_to_segment(const Vec3& p, const Vec3& a, const Vec3& b);

/// Rejection-samples non-overlapping fibers, then renders them.
Phantom generate_phantom(const PhantomConfig& cfg);

/// Renders the given fibers (IDs 1..n in order; later fibers never overwrite
/// earlier ones) with the degradations of `cfg`.
Phantom render_fibers(const PhantomConfig& cfg, std::span<const FiberSpec> fibers);

/// Separable Gaussian filter with edge replication.
ScalarVolume gaussian_blur(const ScalarVolume& v, double sigma);

struct PhantomStats {
  size_t count = 0;
  std::vector<std::pair<uint32_t, size_t>> voxels_per_fiber;  // ascending ID
  double volume_fraction = 0.0;
};

PhantomStats phantom_report(const LabelVolume& gt);
nlohmann::json to_json(const PhantomStats& s);

}  // namespace fiberseg
