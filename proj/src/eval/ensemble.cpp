#include "sfk/eval/ensemble.hpp"

#include "sfk/data/preprocess.hpp"
#include "sfk/error.hpp"
#include "sfk/parallel.hpp"

namespace sfk::eval {

std::vector<double> sum_view_scores(std::span<const std::vector<double>> views) {
  if (views.empty()) throw InvalidArgument("no views to combine", "views");
  std::vector<double> sum(views.front().size(), 0.0);
  for (const auto& v : views) {
    if (v.size() != sum.size()) throw StructuralError("views disagree on the number of classes");
    for (std::size_t i = 0; i < v.size(); ++i) sum[i] += v[i];
  }
  return sum;
}

std::vector<double> combine_view_scores(std::span<const std::vector<double>> view_logits, ScoreDomain domain) {
  if (domain == ScoreDomain::kLogit) return sum_view_scores(view_logits);
  std::vector<std::vector<double>> probs;
  probs.reserve(view_logits.size());
  for (const auto& v : view_logits) probs.push_back(model::softmax(v));
  return sum_view_scores(probs);
}

namespace {

PredictionRecord finish(const data::VideoRecord& record, std::vector<double> scores, int views) {
  PredictionRecord r;
  r.video_id = record.id;
  r.true_label = record.class_index;
  r.predicted_label = argmax(scores);
  r.scores = std::move(scores);
  r.views_used = views;
  return r;
}

}  // namespace

PredictionRecord ensemble_predict(const model::SlowFastNetwork& network, data::VideoSource& source,
                                  const data::VideoRecord& record, ScoreDomain domain) {
  const auto geometry = data::ClipGeometry::from(network.config());
  const auto views = data::enumerate_test_views(source, record, geometry);
  if (views.size() != 6) throw DataError("record '" + record.id + "': expected 6 test views");
  std::vector<std::vector<double>> logits;
  for (const auto& v : views) logits.push_back(network.predict(v, false).scores);
  return finish(record, combine_view_scores(logits, domain), static_cast<int>(views.size()));
}

PredictionRecord single_clip_predict(const model::SlowFastNetwork& network, data::VideoSource& source,
                                     const data::VideoRecord& record, ScoreDomain domain) {
  const auto geometry = data::ClipGeometry::from(network.config());
  Rng unused(0);
  const auto clip = data::preprocess_clip(source, record, data::SampleMode::kEval, geometry, {}, unused);
  const std::vector<std::vector<double>> logits{network.predict(clip, false).scores};
  return finish(record, combine_view_scores(logits, domain), 1);
}

std::vector<PredictionRecord> evaluate_records(const model::SlowFastNetwork& network, data::VideoSource& source,
                                               const std::vector<const data::VideoRecord*>& records,
                                               EvalProtocol protocol, ScoreDomain domain, int workers) {
  return parallel_map(records.size(), workers, [&](std::size_t i) {
    return protocol == EvalProtocol::kEnsemble3x2 ? ensemble_predict(network, source, *records[i], domain)
                                                  : single_clip_predict(network, source, *records[i], domain);
  });
}

}  // namespace sfk::eval
