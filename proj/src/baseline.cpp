#include "fiberseg/baseline.hpp"

#include <cstdlib>
#include <numeric>
#include <stdexcept>

#include "fiberseg/errors.hpp"
#include "fiberseg/postprocess.hpp"

namespace fiberseg::baseline {

void StructuringElement::validate() const {
  if (radius < 1) throw ConfigError("structuring element radius must be >= 1");
  if (shape != Connectivity::k6 && shape != Connectivity::k26) throw ConfigError("connectivity must be 6 or 26");
}

std::vector<Coord> StructuringElement::offsets() const {
  validate();
  std::vector<Coord> out;
  for (int64_t dz = -radius; dz <= radius; ++dz) {
    for (int64_t dy = -radius; dy <= radius; ++dy) {
      for (int64_t dx = -radius; dx <= radius; ++dx) {
        if (shape == Connectivity::k6 && std::abs(dz) + std::abs(dy) + std::abs(dx) > radius) continue;
        out.push_back({dz, dy, dx});
      }
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const StructuringElement& se) {
  j = {{"connectivity", static_cast<int>(se.shape)}, {"radius", se.radius}};
}

void from_json(const nlohmann::json& j, StructuringElement& se) {
  const int c = j.value("connectivity", 6);
  if (c != 6 && c != 26) throw ConfigError("structuring element connectivity must be 6 or 26");
  se.shape = c == 6 ? Connectivity::k6 : Connectivity::k26;
  se.radius = j.value("radius", 1);
}

MaskVolume erode(const MaskVolume& mask, const StructuringElement& se) {
  const auto offsets = se.offsets();
  const Dims d = mask.dims();
  MaskVolume out(d);
  out.voxel_size_um = mask.voxel_size_um;
  for (int64_t z = 0; z < d.depth; ++z) {
    for (int64_t y = 0; y < d.height; ++y) {
      for (int64_t x = 0; x < d.width; ++x) {
        if (!mask(z, y, x)) continue;
        bool keep = true;
        for (const Coord& o : offsets) {
          const int64_t nz = z + o.z, ny = y + o.y, nx = x + o.x;
          if (!mask.contains(nz, ny, nx) || !mask(nz, ny, nx)) {
            keep = false;
            break;
          }
        }
        out(z, y, x) = keep ? 1 : 0;
      }
    }
  }
  return out;
}

namespace {

size_t find_root(std::vector<size_t>& parent, size_t v) {
  while (parent[v] != v) {
    parent[v] = parent[parent[v]];
    v = parent[v];
  }
  return v;
}

}  // namespace

LabelVolume connected_components(const MaskVolume& mask, Connectivity connectivity, size_t* count) {
  // Two-pass raster labelling with union-find over provisional labels.
  const Dims d = mask.dims();
  const StructuringElement se{connectivity, 1};
  std::vector<Coord> backward;  // already-visited neighbours in raster order
  for (const Coord& o : se.offsets()) {
    if (o < Coord{0, 0, 0}) backward.push_back(o);
  }

  LabelVolume provisional(d);
  std::vector<size_t> parent{0};
  for (int64_t z = 0; z < d.depth; ++z) {
    for (int64_t y = 0; y < d.height; ++y) {
      for (int64_t x = 0; x < d.width; ++x) {
        if (!mask(z, y, x)) continue;
        size_t label = 0;
        for (const Coord& o : backward) {
          const int64_t nz = z + o.z, ny = y + o.y, nx = x + o.x;
          if (!mask.contains(nz, ny, nx)) continue;
          const uint32_t n = provisional(nz, ny, nx);
          if (n == 0) continue;
          if (label == 0) {
            label = n;
          } else {
            size_t a = find_root(parent, label), b = find_root(parent, n);
            if (a != b) parent[std::max(a, b)] = std::min(a, b);
          }
        }
        if (label == 0) {
          label = parent.size();
          parent.push_back(label);
        }
        provisional(z, y, x) = static_cast<uint32_t>(label);
      }
    }
  }
  // Provisional labels grow with scan order and roots are minima, so
  // first-seen roots come out in order of each region's first voxel.
  std::vector<uint32_t> final_id(parent.size(), 0);
  uint32_t next = 0;
  LabelVolume out(d);
  out.voxel_size_um = mask.voxel_size_um;
  for (size_t i = 0; i < provisional.size(); ++i) {
    if (provisional[i] == 0) continue;
    const size_t r = find_root(parent, provisional[i]);
    if (final_id[r] == 0) final_id[r] = ++next;
    out[i] = final_id[r];
  }
  if (count != nullptr) *count = next;
  return out;
}

LabelVolume baseline_pipeline(const MaskVolume& mask, const StructuringElement& se, Connectivity connectivity) {
  const MaskVolume core = erode(mask, se);
  size_t seeds = 0;
  LabelVolume labels = connected_components(core, connectivity, &seeds);
  bool any = false;
  for (size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] && !core[i]) labels[i] = kOutlier;
    any = any || mask[i];
  }
  if (any && seeds == 0) throw UnsegmentableTile("baseline: erosion removed the whole foreground");
  return postprocess::watershed_fill(labels, mask);
}

}  // namespace fiberseg::baseline
