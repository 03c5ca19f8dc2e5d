#include "fiberseg/volume_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

namespace fiberseg {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::kF32; }
template <>
constexpr DType dtype_of<uint8_t>() { return DType::kU8; }
template <>
constexpr DType dtype_of<uint32_t>() { return DType::kU32; }

template <typename T>
void to_little_endian(std::vector<T>& values) {
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    for (T& v : values) {
      unsigned char bytes[sizeof(T)];
      std::memcpy(bytes, &v, sizeof(T));
      std::reverse(bytes, bytes + sizeof(T));
      std::memcpy(&v, bytes, sizeof(T));
    }
  } else {
    (void)values;
  }
}

template <typename T>
void write_impl(const fs::path& path, const Volume<T>& v) {
  const fs::path stem = volume_stem(path);
  if (!v.dims().positive()) throw std::invalid_argument("write_volume: dims must be positive");
  if (stem.has_parent_path()) fs::create_directories(stem.parent_path());

  json header = {
      {"dims", {v.dims().depth, v.dims().height, v.dims().width}},
      {"dtype", dtype_tag(dtype_of<T>())},
      {"order", "zyx"},
      {"voxel_size_um", v.voxel_size_um},
  };
  std::ofstream hs(fs::path(stem).concat(".json"));
  if (!hs) throw std::runtime_error("cannot write " + stem.string() + ".json");
  hs << header.dump(2) << "\n";

  std::vector<T> payload(v.data().begin(), v.data().end());
  to_little_endian(payload);
  std::ofstream bs(fs::path(stem).concat(".bin"), std::ios::binary);
  if (!bs) throw std::runtime_error("cannot write " + stem.string() + ".bin");
  bs.write(reinterpret_cast<const char*>(payload.data()),
           static_cast<std::streamsize>(payload.size() * sizeof(T)));
  if (!bs) throw std::runtime_error("short write to " + stem.string() + ".bin");
}

template <typename T>
Volume<T> read_payload(const fs::path& stem, const VolumeHeader& h) {
  const fs::path bin = fs::path(stem).concat(".bin");
  std::ifstream in(bin, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("missing payload " + bin.string());
  const auto bytes = static_cast<size_t>(in.tellg());
  const size_t expected = static_cast<size_t>(h.dims.size()) * sizeof(T);
  if (bytes != expected) {
    throw FormatError("payload " + bin.string() + " has " + std::to_string(bytes) +
                      " bytes, header dims " + to_string(h.dims) + " need " +
                      std::to_string(expected));
  }
  in.seekg(0);
  std::vector<T> values(static_cast<size_t>(h.dims.size()));
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  to_little_endian(values);
  Volume<T> v(h.dims, std::move(values));
  v.voxel_size_um = h.voxel_size_um;
  return v;
}

}  // namespace

std::string dtype_tag(DType t) {
  switch (t) {
    case DType::kF32: return "f32";
    case DType::kU8: return "u8";
    case DType::kU32: return "u32";
  }
  return "?";
}

DType parse_dtype(const std::string& tag) {
  if (tag == "f32") return DType::kF32;
  if (tag == "u8") return DType::kU8;
  if (tag == "u32") return DType::kU32;
  throw FormatError("unknown dtype tag '" + tag + "'");
}

fs::path volume_stem(const fs::path& path) {
  const auto ext = path.extension();
  if (ext == ".bin" || ext == ".json") return fs::path(path).replace_extension();
  return path;
}

void write_volume(const fs::path& path, const ScalarVolume& v) { write_impl(path, v); }
void write_volume(const fs::path& path, const MaskVolume& v) { write_impl(path, v); }
void write_volume(const fs::path& path, const LabelVolume& v) { write_impl(path, v); }

VolumeHeader read_volume_header(const fs::path& path) {
  const fs::path sidecar = fs::path(volume_stem(path)).concat(".json");
  std::ifstream in(sidecar);
  if (!in) throw FormatError("missing header sidecar " + sidecar.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("malformed sidecar " + sidecar.string() + ": " + e.what());
  }
  VolumeHeader h;
  try {
    const auto& d = j.at("dims");
    if (!d.is_array() || d.size() != 3) throw FormatError("dims must be [d,h,w]");
    h.dims = {d[0].get<int64_t>(), d[1].get<int64_t>(), d[2].get<int64_t>()};
    h.dtype = parse_dtype(j.at("dtype").get<std::string>());
    if (j.value("order", std::string("zyx")) != "zyx") {
      throw FormatError("unsupported voxel order in " + sidecar.string());
    }
    h.voxel_size_um = j.value("voxel_size_um", 1.0);
  } catch (const json::exception& e) {
    throw FormatError("bad sidecar " + sidecar.string() + ": " + e.what());
  }
  if (!h.dims.positive()) throw FormatError("non-positive dims in " + sidecar.string());
  return h;
}

AnyVolume read_volume(const fs::path& path) {
  const fs::path stem = volume_stem(path);
  const VolumeHeader h = read_volume_header(stem);
  switch (h.dtype) {
    case DType::kF32: return read_payload<float>(stem, h);
    case DType::kU8: return read_payload<uint8_t>(stem, h);
    case DType::kU32: return read_payload<uint32_t>(stem, h);
  }
  throw FormatError("unreachable dtype");
}

ScalarVolume read_scalar_volume(const fs::path& path) {
  auto v = read_volume(path);
  if (auto* s = std::get_if<ScalarVolume>(&v)) return std::move(*s);
  throw FormatError(path.string() + " is not an f32 volume");
}

MaskVolume read_mask_volume(const fs::path& path) {
  auto v = read_volume(path);
  if (auto* m = std::get_if<MaskVolume>(&v)) return std::move(*m);
  if (auto* l = std::get_if<LabelVolume>(&v)) return foreground_of(*l);
  throw FormatError(path.string() + " is not a u8 mask volume");
}

LabelVolume read_label_volume(const fs::path& path) {
  auto v = read_volume(path);
  if (auto* l = std::get_if<LabelVolume>(&v)) return std::move(*l);
  if (auto* m = std::get_if<MaskVolume>(&v)) {
    LabelVolume out(m->dims());
    out.voxel_size_um = m->voxel_size_um;
    for (size_t i = 0; i < m->size(); ++i) out[i] = (*m)[i];
    return out;
  }
  throw FormatError(path.string() + " is not a u32 label volume");
}

}  // namespace fiberseg
