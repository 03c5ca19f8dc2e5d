#pragma once

// Weights checkpoint: one little-endian binary file holding a JSON config
// snapshot, a layer table (name, shape, offset, count) and the f64 payload.
//
//   "FSEGCKPT" u32 version
//   u64 json_bytes, json text
//   u32 entries, per entry: u32 name_len, name, u32 ndim, i64 shape[ndim], u64 offset, u64 count
//   u64 payload_count, f64 payload[payload_count]

#include <filesystem>

#include <json.hpp>

#include "fiberseg/nn.hpp"

namespace fiberseg {

struct Checkpoint {
  nn::Network network;
  /// Always has "network"; the trainer adds "stage", "train", "config_hash".
  nlohmann::json snapshot;
};

void save_checkpoint(const std::filesystem::path& path, nn::Network& net, nlohmann::json snapshot);

/// Throws FormatError on a corrupt file and CheckpointMismatch when the layer
/// table disagrees with the architecture in the snapshot.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fiberseg
