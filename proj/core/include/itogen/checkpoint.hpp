#pragma once

#include "itogen/njode.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace itogen::io {

// Bookkeeping stored next to the weights.
struct CheckpointMeta {
  std::uint64_t seed = 0;
  int epochs_trained = 0;
  int best_epoch = 0;
  std::uint64_t optimizer_steps = 0;
  // Truncation level suggested for generation (0 when unknown).
  double truncation_level = 0.0;
  double dt = 0.01;
  double horizon = 1.0;
};

// Checkpoint directory:
//   model.json   scheme, per-model configuration and parameter table
//   weights.bin  every parameter of every model in manifest order, each
//                matrix row-major, little-endian IEEE-754 binary64
void save_checkpoint(const std::filesystem::path& dir,
                     const njode::ModelBundle& bundle, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  njode::ModelBundle bundle;
  CheckpointMeta meta;
};

// Throws DataError for a missing directory, a manifest mismatch or a
// truncated weights file.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

// FNV-1a 64 over the serialized weights.
std::uint64_t checksum(const njode::ModelBundle& bundle);
std::string checksum_hex(std::uint64_t value);

}  // namespace itogen::io
