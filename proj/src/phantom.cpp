#include "fiberseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "fiberseg/errors.hpp"
#include "fiberseg/random.hpp"

namespace fiberseg {

namespace {

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 scale(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }

Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(dot(v, v));
  return scale(v, 1.0 / n);
}

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

// Uniform direction on the spherical cap of half-angle `cone` around `axis`.
Vec3 draw_direction(Rng& rng, const Vec3& axis, double cone_rad) {
  const Vec3 w = normalized(axis);
  const Vec3 helper = std::abs(w[0]) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  const Vec3 u = normalized(cross(w, helper));
  const Vec3 v = cross(w, u);
  const double cos_t = 1.0 - rng.uniform() * (1.0 - std::cos(cone_rad));
  const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
  const double phi = 2.0 * std::numbers::pi * rng.uniform();
  return add(add(scale(w, cos_t), scale(u, sin_t * std::cos(phi))), scale(v, sin_t * std::sin(phi)));
}

}  // namespace

void PhantomConfig::validate() const {
  if (!dims.positive()) throw ConfigError("phantom dims must be positive");
  if (fiber_count < 1) throw ConfigError("phantom fiber_count must be >= 1");
  const double limit = static_cast<double>(std::min({dims.depth, dims.height, dims.width})) / 4.0;
  if (!(radius_min_vox > 0.0) || radius_max_vox < radius_min_vox || !(radius_max_vox < limit)) {
    throw ConfigError("phantom radius range must lie within (0, min(dims)/4)");
  }
  if (length_min_vox < 0.0 || length_max_vox < length_min_vox) {
    throw ConfigError("phantom length range is invalid");
  }
  if (orientation_cone_deg < 0.0 || orientation_cone_deg > 180.0) {
    throw ConfigError("orientation cone must be in [0, 180] degrees");
  }
  if (dot(principal_axis, principal_axis) <= 0.0) throw ConfigError("principal axis is zero");
  if (noise_sigma < 0.0 || blur_sigma_vox < 0.0 || min_clearance_vox < 0.0) {
    throw ConfigError("noise, blur and clearance must be non-negative");
  }
  if (max_attempts_per_fiber < 1) throw ConfigError("max_attempts_per_fiber must be >= 1");
}

void to_json(nlohmann::json& j, const PhantomConfig& c) {
  j = {{"dims", {c.dims.depth, c.dims.height, c.dims.width}},
       {"fiber_count", c.fiber_count},
       {"radius_range_vox", {c.radius_min_vox, c.radius_max_vox}},
       {"length_range_vox", {c.length_min_vox, c.length_max_vox}},
       {"principal_axis", c.principal_axis},
       {"orientation_cone_deg", c.orientation_cone_deg},
       {"noise_sigma", c.noise_sigma},
       {"blur_sigma_vox", c.blur_sigma_vox},
       {"min_clearance_vox", c.min_clearance_vox},
       {"max_attempts_per_fiber", c.max_attempts_per_fiber},
       {"voxel_size_um", c.voxel_size_um},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, PhantomConfig& c) {
  PhantomConfig d;
  if (j.contains("dims")) {
    const auto& v = j.at("dims");
    c.dims = {v.at(0).get<int64_t>(), v.at(1).get<int64_t>(), v.at(2).get<int64_t>()};
  } else {
    c.dims = d.dims;
  }
  c.fiber_count = j.value("fiber_count", d.fiber_count);
  if (j.contains("radius_range_vox")) {
    c.radius_min_vox = j.at("radius_range_vox").at(0).get<double>();
    c.radius_max_vox = j.at("radius_range_vox").at(1).get<double>();
  }
  if (j.contains("length_range_vox")) {
    c.length_min_vox = j.at("length_range_vox").at(0).get<double>();
    c.length_max_vox = j.at("length_range_vox").at(1).get<double>();
  }
  c.principal_axis = j.value("principal_axis", d.principal_axis);
  c.orientation_cone_deg = j.value("orientation_cone_deg", d.orientation_cone_deg);
  c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  c.blur_sigma_vox = j.value("blur_sigma_vox", d.blur_sigma_vox);
  c.min_clearance_vox = j.value("min_clearance_vox", d.min_clearance_vox);
  c.max_attempts_per_fiber = j.value("max_attempts_per_fiber", d.max_attempts_per_fiber);
  c.voxel_size_um = j.value("voxel_size_um", d.voxel_size_um);
  c.seed = j.value("seed", d.seed);
}

double distance_to_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = sub(b, a);
  const double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? dot(sub(p, a), ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec3 d = sub(p, add(a, scale(ab, t)));
  return std::sqrt(dot(d, d));
}

std::vector<size_t> rasterize_capsule(const Dims& dims, const Vec3& a, const Vec3& b,
                                      double radius) {
  std::array<int64_t, 3> lo{};
  std::array<int64_t, 3> hi{};
  for (int axis = 0; axis < 3; ++axis) {
    lo[axis] = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(a[axis], b[axis]) - radius)));
    hi[axis] = std::min<int64_t>(dims[axis] - 1,
                                 static_cast<int64_t>(std::ceil(std::max(a[axis], b[axis]) + radius)));
  }
  std::vector<size_t> out;
  for (int64_t z = lo[0]; z <= hi[0]; ++z) {
    for (int64_t y = lo[1]; y <= hi[1]; ++y) {
      for (int64_t x = lo[2]; x <= hi[2]; ++x) {
        const Vec3 p{static_cast<double>(z), static_cast<double>(y), static_cast<double>(x)};
        if (distance_to_segment(p, a, b) <= radius) {
          out.push_back(static_cast<size_t>((z * dims.height + y) * dims.width + x));
        }
      }
    }
  }
  return out;
}

ScalarVolume gaussian_blur(const ScalarVolume& v, double sigma) {
  if (sigma <= 0.0) return v;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[static_cast<size_t>(i + radius)];
  }
  for (double& k : kernel) k /= sum;

  const Dims d = v.dims();
  std::vector<double> cur(v.data().begin(), v.data().end());
  std::vector<double> next(cur.size());
  const std::array<int64_t, 3> strides{d.height * d.width, d.width, 1};
  for (int axis = 0; axis < 3; ++axis) {
    const int64_t extent = d[axis];
    for (int64_t z = 0; z < d.depth; ++z) {
      for (int64_t y = 0; y < d.height; ++y) {
        for (int64_t x = 0; x < d.width; ++x) {
          const std::array<int64_t, 3> c{z, y, x};
          const int64_t base = z * strides[0] + y * strides[1] + x;
          double acc = 0.0;
          for (int i = -radius; i <= radius; ++i) {
            const int64_t pos = std::clamp<int64_t>(c[axis] + i, 0, extent - 1);
            acc += kernel[static_cast<size_t>(i + radius)] *
                   cur[static_cast<size_t>(base + (pos - c[axis]) * strides[axis])];
          }
          next[static_cast<size_t>(base)] = acc;
        }
      }
    }
    std::swap(cur, next);
  }
  ScalarVolume out(d);
  out.voxel_size_um = v.voxel_size_um;
  for (size_t i = 0; i < cur.size(); ++i) out[i] = static_cast<float>(cur[i]);
  return out;
}

Phantom render_fibers(const PhantomConfig& cfg, std::span<const FiberSpec> fibers) {
  Phantom ph;
  ph.gt = LabelVolume(cfg.dims);
  uint32_t next_id = 1;
  for (const FiberSpec& f : fibers) {
    for (size_t i : rasterize_capsule(cfg.dims, f.a, f.b, f.radius)) {
      if (ph.gt[i] == kBackground) ph.gt[i] = next_id;
    }
    ph.fibers.push_back(f);
    ++next_id;
  }
  ph.mask = foreground_of(ph.gt);

  ScalarVolume indicator(cfg.dims);
  for (size_t i = 0; i < indicator.size(); ++i) indicator[i] = ph.mask[i] ? 1.0f : 0.0f;
  ph.raw = gaussian_blur(indicator, cfg.blur_sigma_vox);
  if (cfg.noise_sigma > 0.0) {
    Rng noise(cfg.seed ^ 0x6e6f697365ULL);
    for (size_t i = 0; i < ph.raw.size(); ++i) {
      ph.raw[i] = static_cast<float>(ph.raw[i] + noise.normal(0.0, cfg.noise_sigma));
    }
  }
  ph.raw.voxel_size_um = ph.gt.voxel_size_um = ph.mask.voxel_size_um = cfg.voxel_size_um;
  return ph;
}

Phantom generate_phantom(const PhantomConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const double cone = cfg.orientation_cone_deg * std::numbers::pi / 180.0;

  LabelVolume occupied(cfg.dims);
  std::vector<FiberSpec> placed;
  for (int f = 0; f < cfg.fiber_count; ++f) {
    for (int attempt = 0; attempt < cfg.max_attempts_per_fiber; ++attempt) {
      const Vec3 center{rng.uniform(0.0, static_cast<double>(cfg.dims.depth - 1)),
                        rng.uniform(0.0, static_cast<double>(cfg.dims.height - 1)),
                        rng.uniform(0.0, static_cast<double>(cfg.dims.width - 1))};
      const Vec3 dir = draw_direction(rng, cfg.principal_axis, cone);
      const double radius = rng.uniform(cfg.radius_min_vox, cfg.radius_max_vox);
      const double length = rng.uniform(cfg.length_min_vox, cfg.length_max_vox);
      const FiberSpec spec{sub(center, scale(dir, 0.5 * length)), add(center, scale(dir, 0.5 * length)),
                           radius};

      const auto zone =
          rasterize_capsule(cfg.dims, spec.a, spec.b, radius + cfg.min_clearance_vox);
      const bool clear = std::none_of(zone.begin(), zone.end(),
                                      [&](size_t i) { return occupied[i] != kBackground; });
      if (!clear) continue;
      const auto body = rasterize_capsule(cfg.dims, spec.a, spec.b, radius);
      if (body.empty()) continue;
      const auto id = static_cast<uint32_t>(placed.size() + 1);
      for (size_t i : body) occupied[i] = id;
      placed.push_back(spec);
      break;
    }
  }
  if (placed.empty()) {
    throw std::runtime_error("generate_phantom: could not place any fiber after " +
                             std::to_string(cfg.max_attempts_per_fiber) + " attempts");
  }
  return render_fibers(cfg, placed);
}

PhantomStats phantom_report(const LabelVolume& gt) {
  std::map<uint32_t, size_t> counts;
  size_t fg = 0;
  for (uint32_t id : gt.data()) {
    if (id == kBackground) continue;
    ++counts[id];
    ++fg;
  }
  PhantomStats s;
  s.count = counts.size();
  s.voxels_per_fiber.assign(counts.begin(), counts.end());
  s.volume_fraction = gt.empty() ? 0.0 : static_cast<double>(fg) / static_cast<double>(gt.size());
  return s;
}

nlohmann::json to_json(const PhantomStats& s) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& [id, n] : s.voxels_per_fiber) per.push_back({{"id", id}, {"voxels", n}});
  return {{"count", s.count}, {"volume_fraction", s.volume_fraction}, {"fibers", per}};
}

}  // namespace fiberseg
