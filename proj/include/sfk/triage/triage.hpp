#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sfk/eval/metrics.hpp"

namespace sfk::triage {

enum class ReviewStatus { kUnreviewed, kReviewed };
std::string to_string(ReviewStatus status);
ReviewStatus parse_review_status(const std::string& s);

struct ErrorCase {
  std::string video_id;
  std::string true_label;
  std::string predicted_label;
  std::vector<double> scores;
  /// Normalized score of the (wrong) predicted class.
  double confidence = 0.0;
  ReviewStatus status = ReviewStatus::kUnreviewed;
};

struct CategoryAssignment {
  std::string video_id;
  std::set<std::string> categories;
  std::string comment;
  std::string reviewer;
  std::int64_t timestamp_ms = 0;
};

enum class Effort { kLow, kMedium, kHigh };
std::string to_string(Effort effort);
Effort parse_effort(const std::string& s);

const std::vector<std::string>& seeded_categories();

/// Scores normalized to sum to one: as-is when nonnegative, softmax otherwise.
std::vector<double> normalized_scores(std::span<const double> scores);

/// The misclassified records, most confidently wrong first (ties by id).
std::vector<ErrorCase> collect_errors(std::span<const eval::PredictionRecord> records,
                                      const std::vector<std::string>& class_names);

/// Review order used everywhere cases are listed.
void sort_for_review(std::vector<ErrorCase>& cases);

struct CategoryRow {
  std::string category;
  int count = 0;
  double percent = 0.0;
};

struct CategoryReport {
  bool empty = true;
  int total_errors = 0;
  int reviewed = 0;
  int unreviewed = 0;
  std::string source_split;
  std::vector<CategoryRow> rows;

  /// Category and amount (%) columns, one decimal, with a comment header
  /// carrying the source split and review coverage.
  std::string to_delimited(char sep = '\t') const;
};

struct RankedCategory {
  int rank = 0;
  std::string category;
  double percent = 0.0;
  std::optional<Effort> effort;
  double score = 0.0;
};

/// Without efforts the score is the percent. With efforts it is
/// percent / weight (low 1, medium 2, high 3; categories without an
/// estimate count as medium). Higher scores first, ties alphabetical.
std::vector<RankedCategory> rank_categories(const CategoryReport& report,
                                            const std::optional<std::map<std::string, Effort>>& efforts = std::nullopt);

/// Report over `total_errors` cases given each case's current category set.
CategoryReport build_report(int total_errors, const std::map<std::string, std::set<std::string>>& current,
                            const std::vector<std::string>& category_order, const std::string& source_split = {});

struct CaseFilter {
  std::optional<ReviewStatus> status;
  std::optional<std::string> true_class;
};

struct ImportSummary {
  int added = 0;
  int already_present = 0;
};

/// Append-only event log (JSON lines) plus the state replayed from it.
/// Events: import, case, category, effort, assignment. All methods are
/// serialized by one mutex; mutations are flushed before returning.
class TriageStore {
 public:
  /// In-memory store (nothing persisted).
  TriageStore();
  /// Opens or creates the log at `log_path` and replays it.
  explicit TriageStore(const std::filesystem::path& log_path);

  ImportSummary import_cases(const std::vector<ErrorCase>& cases, const std::string& source_split,
                             int evaluated_records);

  std::vector<ErrorCase> cases(const CaseFilter& filter = {}) const;
  ErrorCase get_case(const std::string& id) const;
  std::vector<CategoryAssignment> history(const std::string& id) const;
  std::optional<CategoryAssignment> current(const std::string& id) const;

  /// Rejects empty category sets (InvalidArgument) and unknown cases
  /// (NotFoundError). New category names are registered. The assignment
  /// with the latest timestamp is current; without an explicit timestamp
  /// the server clock is used, kept strictly increasing.
  ErrorCase assign(const std::string& id, const std::set<std::string>& categories, const std::string& comment,
                   const std::string& reviewer, std::optional<std::int64_t> timestamp_ms = std::nullopt);

  std::vector<std::string> categories() const;
  bool add_category(const std::string& name);

  void set_effort(const std::string& category, Effort effort);
  std::map<std::string, Effort> efforts() const;

  CategoryReport report() const;
  std::string source_split() const;
  int evaluated_records() const;

  const std::filesystem::path& log_path() const { return path_; }

 private:
  void apply(const std::string& line);
  void append(const std::string& line);
  bool register_category(const std::string& name);
  ErrorCase with_status(const ErrorCase& c) const;
  CategoryReport report_locked() const;

  mutable std::mutex mutex_;
  std::filesystem::path path_;
  std::ofstream log_;
  std::vector<ErrorCase> cases_;
  std::map<std::string, std::size_t> case_index_;
  std::vector<std::string> categories_;
  std::map<std::string, std::vector<CategoryAssignment>> history_;
  std::map<std::string, Effort> efforts_;
  std::string source_split_;
  int evaluated_records_ = 0;
  std::int64_t last_timestamp_ = 0;
};

/// Current category set per case in the log, recomputed from scratch.
CategoryReport report_from_log(const std::filesystem::path& log_path);

}  // namespace sfk::triage
