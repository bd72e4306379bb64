#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include "sfk/keyvalue.hpp"
#include "sfk/model/slowfast.hpp"

namespace sfk::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  int epoch = 0;
  double train_error = 0.0;
  double val_error = 0.0;
  std::uint64_t val_seed = 0;
  /// Training configuration in its key-value form.
  KeyValueDoc train_config;
};

/// Binary layout (little-endian):
///   "SFKCKPT\0", u32 version,
///   u64 n + model config text, u64 n + metadata text,
///   u64 parameter count, then per parameter:
///   u32 n + name, u32 rank, i64 dims[rank], f64 values[numel].
/// Written to a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, SlowFastNetwork& network, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  std::unique_ptr<SlowFastNetwork> network;
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sfk::model
