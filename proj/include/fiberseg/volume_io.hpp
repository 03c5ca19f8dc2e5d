#pragma once

// Raw volume files: `<stem>.bin` holds the little-endian payload, `<stem>.json`
// the sidecar {dims:[d,h,w], dtype:"f32"|"u8"|"u32", order:"zyx", voxel_size_um}.

#include <filesystem>
#include <string>
#include <variant>

#include "fiberseg/volume.hpp"

namespace fiberseg {

enum class DType { kF32, kU8, kU32 };

std::string dtype_tag(DType t);
DType parse_dtype(const std::string& tag);

struct VolumeHeader {
  Dims dims;
  DType dtype = DType::kF32;
  double voxel_size_um = 1.0;
};

using AnyVolume = std::variant<ScalarVolume, MaskVolume, LabelVolume>;

/// Strips a trailing ".bin" or ".json" so either file (or the bare stem) can name a volume.
std::filesystem::path volume_stem(const std::filesystem::path& path);

void write_volume(const std::filesystem::path& path, const ScalarVolume& v);
void write_volume(const std::filesystem::path& path, const MaskVolume& v);
void write_volume(const std::filesystem::path& path, const LabelVolume& v);

VolumeHeader read_volume_header(const std::filesystem::path& path);
AnyVolume read_volume(const std::filesystem::path& path);

ScalarVolume read_scalar_volume(const std::filesystem::path& path);
MaskVolume read_mask_volume(const std::filesystem::path& path);
/// Accepts u32 label files and u8 masks (widened).
LabelVolume read_label_volume(const std::filesystem::path& path);

}  // namespace fiberseg
