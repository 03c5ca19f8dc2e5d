#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>

#include "fiberseg/errors.hpp"
#include "fiberseg/phantom.hpp"
#include "fiberseg/random.hpp"

using namespace fiberseg;

namespace {

uint64_t checksum(const ScalarVolume& v) { return fnv1a64(v.data().data(), v.size() * sizeof(float)); }
uint64_t checksum(const LabelVolume& v) { return fnv1a64(v.data().data(), v.size() * sizeof(uint32_t)); }

// Largest distance from a voxel of `id` to the nearest voxel centre not in `id`.
double inscribed_radius(const LabelVolume& gt, uint32_t id) {
  double best = 0.0;
  constexpr int w = 4;
  for (size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] != id) continue;
    const Coord c = gt.coord(i);
    double nearest = 1e9;
    for (int dz = -w; dz <= w; ++dz) {
      for (int dy = -w; dy <= w; ++dy) {
        for (int dx = -w; dx <= w; ++dx) {
          const int64_t z = c.z + dz, y = c.y + dy, x = c.x + dx;
          const bool outside = !gt.contains(z, y, x) || gt(z, y, x) != id;
          if (outside) nearest = std::min(nearest, std::sqrt(double(dz * dz + dy * dy + dx * dx)));
        }
      }
    }
    best = std::max(best, nearest);
  }
  return best;
}

}  // namespace

TEST_SUITE("phantom") {

TEST_CASE("single fiber without degradation: raw equals mask") {
  PhantomConfig c;
  c.dims = Dims::cube(32);
  c.fiber_count = 1;
  c.noise_sigma = 0.0;
  c.blur_sigma_vox = 0.0;
  const Phantom p = generate_phantom(c);
  CHECK(phantom_report(p.gt).count == 1);
  for (size_t i = 0; i < p.raw.size(); ++i) {
    REQUIRE(p.raw[i] == static_cast<float>(p.mask[i]));
  }
}

TEST_CASE("same seed reproduces, other seed differs") {
  PhantomConfig c;
  c.dims = Dims::cube(40);
  c.fiber_count = 8;
  const Phantom a = generate_phantom(c);
  const Phantom b = generate_phantom(c);
  CHECK(checksum(a.raw) == checksum(b.raw));
  CHECK(checksum(a.gt) == checksum(b.gt));
  c.seed = 43;
  CHECK(checksum(generate_phantom(c).gt) != checksum(a.gt));
}

TEST_CASE("standard phantom: 25 contiguous instances of the right thickness") {
  const PhantomConfig c;  // 64^3, 25 fibers, radius 1.0-1.5, seed 42
  const Phantom p = generate_phantom(c);
  const PhantomStats s = phantom_report(p.gt);
  CHECK(s.count == 25);
  CHECK(p.fibers.size() == 25);
  for (size_t k = 0; k < s.voxels_per_fiber.size(); ++k) CHECK(s.voxels_per_fiber[k].first == k + 1);
  for (uint32_t id = 1; id <= 25; ++id) {
    const double r = inscribed_radius(p.gt, id);
    CHECK(r >= 1.0);
    CHECK(r <= 2.0);
  }
  // Placement never overlaps: every fiber's rasterization is labelled with its own ID.
  for (size_t k = 0; k < p.fibers.size(); ++k) {
    for (size_t i : rasterize_capsule(c.dims, p.fibers[k].a, p.fibers[k].b, p.fibers[k].radius)) {
      REQUIRE(p.gt[i] == k + 1);
    }
  }
  for (size_t i = 0; i < p.gt.size(); ++i) REQUIRE((p.gt[i] != 0) == (p.mask[i] != 0));
}

TEST_CASE("straight fiber voxel count close to the cylinder volume") {
  const Dims d = Dims::cube(48);
  const auto voxels = rasterize_capsule(d, {10.0, 10.3, 10.6}, {30.0, 10.3, 10.6}, 1.0);
  const double cylinder = std::numbers::pi * 20.0;
  CHECK(voxels.size() > cylinder / 2.0);
  CHECK(voxels.size() < cylinder * 2.0);
  // Exact count: every listed centre is within the radius, every other centre is not.
  size_t brute = 0;
  for (int64_t z = 0; z < 48; ++z) {
    for (int64_t y = 0; y < 48; ++y) {
      for (int64_t x = 0; x < 48; ++x) {
        brute += distance_to_segment({double(z), double(y), double(x)}, {10.0, 10.3, 10.6}, {30.0, 10.3, 10.6}) <= 1.0;
      }
    }
  }
  CHECK(voxels.size() == brute);
}

TEST_CASE("report of an empty volume") {
  const PhantomStats s = phantom_report(LabelVolume(Dims::cube(8)));
  CHECK(s.count == 0);
  CHECK(s.volume_fraction == 0.0);
}

TEST_CASE("calibrated threshold recovers the material fraction") {
  PhantomConfig c;
  c.dims = Dims::cube(32);
  c.noise_sigma = 0.05;
  c.blur_sigma_vox = 0.6;
  std::vector<FiberSpec> fibers;
  for (double y : {4.0, 12.0, 20.0, 28.0}) {
    for (double x : {4.0, 12.0, 20.0, 28.0}) fibers.push_back({{-2.0, y, x}, {34.0, y, x}, 1.5});
  }
  const Phantom p = render_fibers(c, fibers);
  const double truth = phantom_report(p.gt).volume_fraction;
  CHECK(std::abs(truth - 0.15) < 0.02);
  const MaskVolume m = threshold_air_mask(p.raw, 0.5);
  double on = 0;
  for (uint8_t v : m.data()) on += v;
  CHECK(std::abs(on / m.size() - truth) < 0.02);
}

TEST_CASE("blur: sigma 0 is the identity and constants are preserved") {
  Rng rng(2);
  ScalarVolume v(Dims{5, 6, 7});
  for (auto& x : v.data()) x = static_cast<float>(rng.uniform());
  CHECK(gaussian_blur(v, 0.0) == v);
  const ScalarVolume flat = gaussian_blur(ScalarVolume(Dims::cube(6), 2.5f), 1.3);
  for (float x : flat.data()) CHECK(x == doctest::Approx(2.5).epsilon(1e-6));
}

TEST_CASE("config validation") {
  PhantomConfig c;
  c.fiber_count = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PhantomConfig{};
  c.radius_min_vox = 20.0;
  c.radius_max_vox = 21.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = PhantomConfig{};
  c.noise_sigma = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const nlohmann::json j = PhantomConfig{};
  CHECK(j.get<PhantomConfig>().fiber_count == 25);
}

}  // TEST_SUITE
