#include "fiberseg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "fiberseg/errors.hpp"

namespace fiberseg {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'F', 'S', 'E', 'G', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("checkpoint truncated");
  return v;
}

struct Entry {
  std::vector<int64_t> shape;
  uint64_t offset = 0;
  uint64_t count = 0;
};

}  // namespace

void save_checkpoint(const fs::path& path, nn::Network& net, nlohmann::json snapshot) {
  snapshot["network"] = net.config();
  const std::string text = snapshot.dump();
  const auto tensors = net.all_tensors();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<uint32_t>(os, kVersion);
  put<uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  put<uint32_t>(os, static_cast<uint32_t>(tensors.size()));
  uint64_t offset = 0;
  for (const auto& t : tensors) {
    put<uint32_t>(os, static_cast<uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<uint32_t>(os, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) put<int64_t>(os, d);
    put<uint64_t>(os, offset);
    put<uint64_t>(os, t.value->size());
    offset += t.value->size();
  }
  put<uint64_t>(os, offset);
  for (const auto& t : tensors) {
    os.write(reinterpret_cast<const char*>(t.value->data()),
             static_cast<std::streamsize>(t.value->size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("short write to checkpoint " + path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(path.string() + " is not a checkpoint");
  }
  if (get<uint32_t>(is) != kVersion) throw FormatError("unsupported checkpoint version");
  const auto json_len = get<uint64_t>(is);
  std::string text(json_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(json_len));
  if (!is) throw FormatError("checkpoint truncated in config snapshot");

  Checkpoint ck;
  try {
    ck.snapshot = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config snapshot is not JSON: ") + e.what());
  }
  if (!ck.snapshot.contains("network")) throw FormatError("checkpoint snapshot lacks 'network'");

  std::map<std::string, Entry> table;
  const auto entries = get<uint32_t>(is);
  for (uint32_t e = 0; e < entries; ++e) {
    const auto name_len = get<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    Entry entry;
    const auto ndim = get<uint32_t>(is);
    for (uint32_t d = 0; d < ndim; ++d) entry.shape.push_back(get<int64_t>(is));
    entry.offset = get<uint64_t>(is);
    entry.count = get<uint64_t>(is);
    table.emplace(std::move(name), std::move(entry));
  }
  const auto payload_count = get<uint64_t>(is);
  std::vector<double> payload(payload_count);
  is.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload_count * sizeof(double)));
  if (!is) throw FormatError("checkpoint payload truncated");

  nn::NetworkConfig cfg;
  try {
    cfg = ck.snapshot.at("network").get<nn::NetworkConfig>();
    cfg.validate();
  } catch (const std::exception& e) {
    throw CheckpointMismatch(std::string("checkpoint network config invalid: ") + e.what());
  }
  ck.network = nn::Network(cfg);
  for (auto& t : ck.network.all_tensors()) {
    const auto it = table.find(t.name);
    if (it == table.end()) throw CheckpointMismatch("checkpoint lacks tensor " + t.name);
    const Entry& e = it->second;
    if (e.shape != t.shape || e.count != t.value->size()) {
      throw CheckpointMismatch("tensor " + t.name + " has an incompatible shape");
    }
    if (e.offset + e.count > payload.size()) throw FormatError("tensor " + t.name + " overruns payload");
    std::copy(payload.begin() + static_cast<std::ptrdiff_t>(e.offset),
              payload.begin() + static_cast<std::ptrdiff_t>(e.offset + e.count), t.value->begin());
  }
  return ck;
}

}  // namespace fiberseg
