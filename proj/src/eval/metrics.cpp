#include "sfk/eval/metrics.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "sfk/error.hpp"

namespace sfk::eval {
using nlohmann::json;

int argmax(std::span<const double> scores) {
  if (scores.empty()) throw InvalidArgument("argmax of an empty score vector", "scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return static_cast<int>(best);
}

int correct_count(std::span<const PredictionRecord> records) {
  int n = 0;
  for (const auto& r : records) n += r.predicted_label == r.true_label ? 1 : 0;
  return n;
}

double accuracy(std::span<const PredictionRecord> records) {
  if (records.empty()) throw InvalidArgument("accuracy of an empty record set", "records");
  return 100.0 * correct_count(records) / static_cast<double>(records.size());
}

double error_rate(std::span<const PredictionRecord> records) {
  if (records.empty()) throw InvalidArgument("error rate of an empty record set", "records");
  const auto wrong = static_cast<std::int64_t>(records.size()) - correct_count(records);
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(records.size());
}

namespace {

std::int64_t checked_total(const BinaryCounts& c) {
  if (c.tp < 0 || c.tn < 0 || c.fp < 0 || c.fn < 0) throw InvalidArgument("negative confusion count", "counts");
  const auto total = c.tp + c.tn + c.fp + c.fn;
  if (total == 0) throw InvalidArgument("rate over zero examples", "counts");
  return total;
}

}  // namespace

double accuracy(const BinaryCounts& c) {
  const auto total = checked_total(c);
  return 100.0 * static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
}

double error_rate(const BinaryCounts& c) {
  const auto total = checked_total(c);
  return 100.0 * static_cast<double>(c.fp + c.fn) / static_cast<double>(total);
}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_names)
    : names_(std::move(class_names)), counts_(names_.size() * names_.size(), 0) {
  if (names_.empty()) throw InvalidArgument("confusion matrix needs at least one class", "classes");
}

void ConfusionMatrix::add(int t, int p, const std::string& record_id) {
  const int k = static_cast<int>(size());
  if (t < 0 || t >= k || p < 0 || p >= k) {
    throw InvalidArgument("record '" + record_id + "': label out of range (true " + std::to_string(t) +
                              ", predicted " + std::to_string(p) + ", classes " + std::to_string(k) + ")",
                          record_id);
  }
  ++counts_[static_cast<std::size_t>(t) * size() + static_cast<std::size_t>(p)];
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.names_ != names_) throw InvalidArgument("merging confusion matrices over different classes", "classes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::int64_t ConfusionMatrix::count(int t, int p) const {
  return counts_.at(static_cast<std::size_t>(t) * size() + static_cast<std::size_t>(p));
}

std::int64_t ConfusionMatrix::row_total(int t) const {
  std::int64_t s = 0;
  for (std::size_t p = 0; p < size(); ++p) s += count(t, static_cast<int>(p));
  return s;
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < size(); ++i) s += count(static_cast<int>(i), static_cast<int>(i));
  return s;
}

std::string ConfusionMatrix::to_delimited(char sep) const {
  std::ostringstream out;
  out << "true\\predicted";
  for (const auto& n : names_) out << sep << n;
  out << '\n';
  for (std::size_t t = 0; t < size(); ++t) {
    out << names_[t];
    for (std::size_t p = 0; p < size(); ++p) out << sep << count(static_cast<int>(t), static_cast<int>(p));
    out << '\n';
  }
  return out.str();
}

ConfusionMatrix confusion_matrix(std::span<const PredictionRecord> records, const std::vector<std::string>& class_names) {
  ConfusionMatrix cm(class_names);
  for (const auto& r : records) cm.add(r.true_label, r.predicted_label, r.video_id);
  return cm;
}

std::vector<std::optional<double>> per_class_accuracy(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out(cm.size());
  for (std::size_t c = 0; c < cm.size(); ++c) {
    const auto row = cm.row_total(static_cast<int>(c));
    if (row > 0) out[c] = 100.0 * static_cast<double>(cm.count(static_cast<int>(c), static_cast<int>(c))) / static_cast<double>(row);
  }
  return out;
}

double macro_accuracy(const ConfusionMatrix& cm) {
  double sum = 0;
  int n = 0;
  for (const auto& a : per_class_accuracy(cm)) {
    if (a) {
      sum += *a;
      ++n;
    }
  }
  if (n == 0) throw InvalidArgument("macro accuracy of an empty matrix", "matrix");
  return sum / n;
}

void write_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> records) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& r : records) {
      json j;
      j["video_id"] = r.video_id;
      j["true"] = r.true_label;
      j["pred"] = r.predicted_label;
      j["scores"] = r.scores;
      j["views_used"] = r.views_used;
      out << j.dump() << '\n';
    }
    if (!out) throw DataError("failed writing " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions file " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      PredictionRecord r;
      r.video_id = j.at("video_id").get<std::string>();
      r.true_label = j.at("true").get<int>();
      r.predicted_label = j.at("pred").get<int>();
      r.scores = j.at("scores").get<std::vector<double>>();
      r.views_used = j.value("views_used", 1);
      if (!r.scores.empty() && argmax(r.scores) != r.predicted_label) {
        throw DataError("prediction does not match the argmax of its scores");
      }
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace sfk::eval
