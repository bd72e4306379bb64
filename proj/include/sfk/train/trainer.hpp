#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sfk/data/manifest.hpp"
#include "sfk/data/preprocess.hpp"
#include "sfk/data/splits.hpp"
#include "sfk/data/video.hpp"
#include "sfk/model/slowfast.hpp"
#include "sfk/train/train_config.hpp"

namespace sfk::train {

enum class StopDecision { kContinue, kStop };

/// Stop iff the last strict improvement of validation error is at least
/// `patience` epochs old. `val_errors[i]` belongs to epoch i+1.
StopDecision early_stop_check(const std::vector<double>& val_errors, int patience);

/// 1-based epoch of the minimum; ties go to the earliest.
int best_epoch_of(const std::vector<double>& val_errors);

struct ValidationResult {
  double accuracy = 0.0;  ///< percent over scored videos
  int correct = 0;
  int total = 0;
  std::vector<std::string> skipped;
  std::vector<int> predicted;  ///< per scored record, in input order
};

/// Scores each record from one randomly placed clip. The clip for record i
/// is drawn from Rng(mix_seed(seed, i)), so results do not depend on the
/// worker count. Undecodable videos are skipped with a warning; throws
/// DataError if nothing remains.
ValidationResult validate(const model::SlowFastNetwork& network, data::VideoSource& source,
                          const std::vector<const data::VideoRecord*>& records, std::uint64_t seed, int workers = 1);

struct EpochRecord {
  int epoch = 0;
  double train_error = 0.0;
  double val_error = 0.0;
  double learning_rate = 0.0;
  double seconds = 0.0;
  double loss = 0.0;
  std::uint64_t val_seed = 0;
  int val_skipped = 0;
};

/// One JSON object per line.
std::string history_line(const EpochRecord& record);
std::vector<EpochRecord> read_history(const std::filesystem::path& path);

struct TrainingRun {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_error = 0.0;
  std::vector<std::filesystem::path> checkpoints;
  bool stopped_early = false;
};

struct TrainOptions {
  std::filesystem::path output_dir;
  std::filesystem::path cache_dir;
  std::size_t memory_budget_bytes = 512ull << 20;
  /// Called after every epoch; returning false stops the run.
  std::function<bool(const EpochRecord&, const model::SlowFastNetwork&)> on_epoch;
};

/// Validation seed of a 1-based epoch; re-drawn every epoch.
std::uint64_t validation_seed(std::uint64_t train_seed, int epoch);

/// Trains on the split's train records and validates on its val records.
/// Writes history.jsonl, best.ckpt (on strict improvement), last.ckpt (every
/// finite epoch) and epoch_NNNN.ckpt every `checkpoint_every` epochs. A
/// non-finite loss aborts with RuntimeError; checkpoints already written are
/// kept.
TrainingRun train(const model::SlowFastConfig& model_config, const data::DatasetManifest& manifest,
                  const data::SplitSpec& splits, const TrainConfig& config, const TrainOptions& options);

}  // namespace sfk::train
