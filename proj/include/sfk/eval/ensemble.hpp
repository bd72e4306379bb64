#pragma once

#include <span>
#include <vector>

#include "sfk/data/video.hpp"
#include "sfk/eval/metrics.hpp"
#include "sfk/model/slowfast.hpp"

namespace sfk::eval {

/// What gets summed across views: softmax probabilities (default) or raw logits.
enum class ScoreDomain { kProbability, kLogit };

enum class EvalProtocol {
  kSingleClip,  ///< centered window, center crop
  kEnsemble3x2,
};

/// Element-wise sum; all views must have the same length.
std::vector<double> sum_view_scores(std::span<const std::vector<double>> views);

/// Converts per-view logits into the chosen domain and sums them.
std::vector<double> combine_view_scores(std::span<const std::vector<double>> view_logits, ScoreDomain domain);

/// Runs all six test views of one video. A view that cannot be produced fails
/// the whole video with DataError.
PredictionRecord ensemble_predict(const model::SlowFastNetwork& network, data::VideoSource& source,
                                  const data::VideoRecord& record, ScoreDomain domain = ScoreDomain::kProbability);

PredictionRecord single_clip_predict(const model::SlowFastNetwork& network, data::VideoSource& source,
                                     const data::VideoRecord& record, ScoreDomain domain = ScoreDomain::kProbability);

/// Records in input order. Any failing video aborts the evaluation.
std::vector<PredictionRecord> evaluate_records(const model::SlowFastNetwork& network, data::VideoSource& source,
                                               const std::vector<const data::VideoRecord*>& records,
                                               EvalProtocol protocol, ScoreDomain domain = ScoreDomain::kProbability,
                                               int workers = 1);

}  // namespace sfk::eval
