#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sfk/data/preprocess.hpp"
#include "sfk/keyvalue.hpp"

namespace sfk::train {

enum class OptimizerKind { kSgdMomentum, kAdam };
enum class LrSchedule { kCosine, kConstant };

std::string to_string(OptimizerKind kind);
std::string to_string(LrSchedule schedule);

struct TrainConfig {
  int epochs_max = 200;
  int batch_size = 8;
  OptimizerKind optimizer = OptimizerKind::kSgdMomentum;
  double learning_rate = 0.01;
  LrSchedule schedule = LrSchedule::kCosine;
  double lr_min = 0.0;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double weight_decay = 1e-4;
  double dropout_rate = 0.5;
  int early_stop_patience = 50;
  std::uint64_t seed = 0;
  int checkpoint_every = 25;
  int workers = 1;
  data::Augmentation augmentation;

  void validate() const;

  /// Learning rate for a 1-based epoch. Cosine decays from learning_rate at
  /// epoch 1 to lr_min at epochs_max.
  double lr_at(int epoch) const;

  KeyValueDoc to_kv() const;
  bool operator==(const TrainConfig&) const = default;
};

/// Keys as written by `to_kv`; unknown keys raise ConfigError.
TrainConfig train_config_from_entries(const std::vector<std::pair<std::string, std::string>>& entries);

}  // namespace sfk::train
