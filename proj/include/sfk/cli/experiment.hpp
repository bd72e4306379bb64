#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sfk/data/splits.hpp"
#include "sfk/eval/ensemble.hpp"
#include "sfk/keyvalue.hpp"
#include "sfk/model/config.hpp"
#include "sfk/train/train_config.hpp"

namespace sfk::cli {

struct DataConfig {
  std::filesystem::path manifest;
  std::filesystem::path cache_dir;
  data::SplitRatios split_ratios{0.7, 0.2, 0.1};
  std::uint64_t split_seed = 0;
  bool group_by_player = false;
  std::vector<double> histogram_edges{0, 1, 2, 3, 4, 5, 6};
  std::size_t memory_budget_mb = 512;

  KeyValueDoc to_kv() const;
};

struct EvalConfig {
  eval::EvalProtocol protocol = eval::EvalProtocol::kEnsemble3x2;
  eval::ScoreDomain score_domain = eval::ScoreDomain::kProbability;
  data::Split split = data::Split::kTest;
  int workers = 1;

  KeyValueDoc to_kv() const;
};

/// One experiment file: `model.*`, `train.*`, `data.*` and `eval.*` keys.
/// Every key is checked by its section parser; unknown keys and unknown
/// sections are ConfigErrors.
struct ExperimentConfig {
  model::SlowFastConfig model;
  train::TrainConfig train;
  DataConfig data;
  EvalConfig eval;

  /// Fully resolved form, defaults included; parsing it gives back an equal config.
  KeyValueDoc to_kv() const;
};

ExperimentConfig parse_experiment(const KeyValueDoc& doc, const std::filesystem::path& base_dir = {});

/// Loads `path` (when nonempty), then applies `key=value` overrides in order.
KeyValueDoc load_experiment_doc(const std::filesystem::path& path, const std::vector<std::string>& overrides);

std::string to_string(eval::EvalProtocol protocol);
eval::EvalProtocol parse_protocol(const std::string& text);

}  // namespace sfk::cli
