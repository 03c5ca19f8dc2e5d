#pragma once

// Classical instance baseline: erode the semantic mask, label the eroded
// cores by connected components, grow them back over the mask by watershed.

#include <json.hpp>

#include "fiberseg/volume.hpp"

namespace fiberseg::baseline {

enum class Connectivity { k6 = 6, k26 = 26 };

/// 6-neighbourhood ball: |dz|+|dy|+|dx| <= radius. 26-neighbourhood ball: max(|d|) <= radius.
struct StructuringElement {
  Connectivity shape = Connectivity::k6;
  int radius = 1;

  void validate() const;
  std::vector<Coord> offsets() const;
};

void to_json(nlohmann::json& j, const StructuringElement& se);
void from_json(const nlohmann::json& j, StructuringElement& se);

/// A voxel survives iff every offset of the element lands on foreground
/// (outside the volume counts as background).
MaskVolume erode(const MaskVolume& mask, const StructuringElement& se);

/// Maximal connected foreground regions labelled 1..K in order of their first
/// voxel in z-major scan order.
LabelVolume connected_components(const MaskVolume& mask, Connectivity connectivity = Connectivity::k26,
                                 size_t* count = nullptr);

/// erode -> connected components -> watershed back over `mask`.
/// Throws UnsegmentableTile when the erosion removes every voxel of a non-empty mask.
LabelVolume baseline_pipeline(const MaskVolume& mask, const StructuringElement& se,
                              Connectivity connectivity = Connectivity::k26);

}  // namespace fiberseg::baseline
