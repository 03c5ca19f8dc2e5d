#pragma once

#include <stdexcept>
#include <string>

namespace fiberseg {

/// Malformed or inconsistent on-disk data (sidecar, payload, checkpoint).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input that makes an operation mathematically undefined (e.g. zero variance).
class DegenerateInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tile with foreground voxels but nothing to seed instance labels from.
class UnsegmentableTile : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fiberseg
