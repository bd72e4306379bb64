#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sfk::eval {

struct PredictionRecord {
  std::string video_id;
  int true_label = 0;
  int predicted_label = 0;
  std::vector<double> scores;
  int views_used = 1;
};

struct BinaryCounts {
  std::int64_t tp = 0;
  std::int64_t tn = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

/// Lowest index wins ties.
int argmax(std::span<const double> scores);

/// Percentages; both throw InvalidArgument on empty input.
double accuracy(std::span<const PredictionRecord> records);
double error_rate(std::span<const PredictionRecord> records);
double accuracy(const BinaryCounts& counts);
double error_rate(const BinaryCounts& counts);

int correct_count(std::span<const PredictionRecord> records);

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::vector<std::string> class_names);

  /// Throws InvalidArgument naming `record_id` for labels outside the class range.
  void add(int true_label, int predicted_label, const std::string& record_id = {});
  void merge(const ConfusionMatrix& other);

  std::size_t size() const { return names_.size(); }
  std::int64_t count(int true_label, int predicted_label) const;
  std::int64_t row_total(int true_label) const;
  std::int64_t total() const;
  std::int64_t trace() const;
  const std::vector<std::string>& class_names() const { return names_; }

  /// Header row and first column carry the class names; rows are true classes.
  std::string to_delimited(char sep = '\t') const;

 private:
  std::vector<std::string> names_;
  std::vector<std::int64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const PredictionRecord> records, const std::vector<std::string>& class_names);

/// Diagonal over row total, in percent; nullopt for classes with no records.
std::vector<std::optional<double>> per_class_accuracy(const ConfusionMatrix& cm);

/// Mean over the defined per-class accuracies.
double macro_accuracy(const ConfusionMatrix& cm);

/// One JSON object per line: video_id, true, pred, scores, views_used.
void write_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> records);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

}  // namespace sfk::eval
