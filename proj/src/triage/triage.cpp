#include "sfk/triage/triage.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <sstream>

#include "sfk/error.hpp"

namespace sfk::triage {
using nlohmann::json;

std::string to_string(ReviewStatus s) { return s == ReviewStatus::kReviewed ? "reviewed" : "unreviewed"; }

ReviewStatus parse_review_status(const std::string& s) {
  if (s == "reviewed") return ReviewStatus::kReviewed;
  if (s == "unreviewed") return ReviewStatus::kUnreviewed;
  throw InvalidArgument("status must be reviewed or unreviewed, got '" + s + "'", "status");
}

std::string to_string(Effort e) {
  switch (e) {
    case Effort::kLow: return "low";
    case Effort::kMedium: return "med";
    case Effort::kHigh: return "high";
  }
  return "med";
}

Effort parse_effort(const std::string& s) {
  if (s == "low") return Effort::kLow;
  if (s == "med" || s == "medium") return Effort::kMedium;
  if (s == "high") return Effort::kHigh;
  throw InvalidArgument("effort must be low, med or high, got '" + s + "'", "effort");
}

const std::vector<std::string>& seeded_categories() {
  static const std::vector<std::string> names{"serve confusion", "slice/volley confusion", "smash/serve confusion",
                                              "beginners", "others"};
  return names;
}

std::vector<double> normalized_scores(std::span<const double> scores) {
  std::vector<double> out(scores.begin(), scores.end());
  if (out.empty()) return out;
  const bool nonnegative = std::all_of(out.begin(), out.end(), [](double v) { return v >= 0; });
  double sum = 0;
  for (double v : out) sum += v;
  if (nonnegative && sum > 0) {
    for (double& v : out) v /= sum;
    return out;
  }
  const double mx = *std::max_element(out.begin(), out.end());
  sum = 0;
  for (double& v : out) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : out) v /= sum;
  return out;
}

void sort_for_review(std::vector<ErrorCase>& cases) {
  std::sort(cases.begin(), cases.end(), [](const ErrorCase& a, const ErrorCase& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return a.video_id < b.video_id;
  });
}

std::vector<ErrorCase> collect_errors(std::span<const eval::PredictionRecord> records,
                                      const std::vector<std::string>& class_names) {
  std::vector<ErrorCase> out;
  const int k = static_cast<int>(class_names.size());
  for (const auto& r : records) {
    if (r.true_label < 0 || r.true_label >= k || r.predicted_label < 0 || r.predicted_label >= k) {
      throw InvalidArgument("record '" + r.video_id + "': label out of range", r.video_id);
    }
    if (r.true_label == r.predicted_label) continue;
    ErrorCase c;
    c.video_id = r.video_id;
    c.true_label = class_names[static_cast<std::size_t>(r.true_label)];
    c.predicted_label = class_names[static_cast<std::size_t>(r.predicted_label)];
    c.scores = r.scores;
    const auto norm = normalized_scores(r.scores);
    c.confidence = static_cast<std::size_t>(r.predicted_label) < norm.size()
                       ? norm[static_cast<std::size_t>(r.predicted_label)]
                       : 0.0;
    out.push_back(std::move(c));
  }
  sort_for_review(out);
  return out;
}

std::string CategoryReport::to_delimited(char sep) const {
  std::ostringstream out;
  out << "# source split: " << (source_split.empty() ? "unspecified" : source_split) << '\n';
  if (empty) {
    out << "# no error cases\n";
    out << "category" << sep << "amount (%)\n";
    return out.str();
  }
  out << "# error cases: " << total_errors << ", reviewed: " << reviewed << ", unreviewed: " << unreviewed << '\n';
  out << "category" << sep << "amount (%)\n";
  char buf[32];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.1f", r.percent);
    out << r.category << sep << buf << '\n';
  }
  return out.str();
}

CategoryReport build_report(int total_errors, const std::map<std::string, std::set<std::string>>& current,
                            const std::vector<std::string>& category_order, const std::string& source_split) {
  CategoryReport rep;
  rep.source_split = source_split;
  rep.total_errors = total_errors;
  rep.empty = total_errors == 0;
  rep.reviewed = static_cast<int>(current.size());
  rep.unreviewed = total_errors - rep.reviewed;
  std::map<std::string, int> counts;
  for (const auto& [id, cats] : current) {
    for (const auto& c : cats) ++counts[c];
  }
  std::vector<std::string> order = category_order;
  for (const auto& [name, n] : counts) {
    if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
  }
  if (rep.empty) return rep;
  for (const auto& name : order) {
    CategoryRow row;
    row.category = name;
    row.count = counts.count(name) ? counts[name] : 0;
    row.percent = 100.0 * row.count / total_errors;
    rep.rows.push_back(row);
  }
  return rep;
}

std::vector<RankedCategory> rank_categories(const CategoryReport& report,
                                            const std::optional<std::map<std::string, Effort>>& efforts) {
  if (report.empty || report.rows.empty()) throw InvalidArgument("cannot rank an empty report", "report");
  std::vector<RankedCategory> out;
  for (const auto& row : report.rows) {
    RankedCategory r;
    r.category = row.category;
    r.percent = row.percent;
    r.score = row.percent;
    if (efforts) {
      auto it = efforts->find(row.category);
      if (it != efforts->end()) r.effort = it->second;
      const Effort e = r.effort.value_or(Effort::kMedium);
      r.score = row.percent / (e == Effort::kLow ? 1.0 : e == Effort::kMedium ? 2.0 : 3.0);
    }
    out.push_back(r);
  }
  std::sort(out.begin(), out.end(), [](const RankedCategory& a, const RankedCategory& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.category < b.category;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = static_cast<int>(i) + 1;
  return out;
}

namespace {

json case_event(const ErrorCase& c) {
  return {{"type", "case"},       {"video_id", c.video_id},    {"true_label", c.true_label},
          {"predicted_label", c.predicted_label}, {"scores", c.scores}, {"confidence", c.confidence}};
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

const CategoryAssignment* latest(const std::vector<CategoryAssignment>& h) {
  const CategoryAssignment* best = nullptr;
  for (const auto& a : h) {
    if (!best || a.timestamp_ms >= best->timestamp_ms) best = &a;
  }
  return best;
}

}  // namespace

TriageStore::TriageStore() {
  for (const auto& c : seeded_categories()) categories_.push_back(c);
}

TriageStore::TriageStore(const std::filesystem::path& log_path) : TriageStore() {
  path_ = log_path;
  if (std::filesystem::exists(path_)) {
    std::ifstream in(path_);
    if (!in) throw DataError("cannot read triage log " + path_.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        apply(line);
      } catch (const std::exception& e) {
        throw DataError(path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  } else if (path_.has_parent_path()) {
    std::filesystem::create_directories(path_.parent_path());
  }
  log_.open(path_, std::ios::app);
  if (!log_) throw DataError("cannot open triage log " + path_.string() + " for writing");
}

void TriageStore::append(const std::string& line) {
  if (path_.empty()) return;
  log_ << line << '\n';
  log_.flush();
  if (!log_) throw DataError("failed appending to triage log " + path_.string());
}

bool TriageStore::register_category(const std::string& name) {
  if (std::find(categories_.begin(), categories_.end(), name) != categories_.end()) return false;
  categories_.push_back(name);
  return true;
}

void TriageStore::apply(const std::string& line) {
  const auto j = json::parse(line);
  const auto type = j.at("type").get<std::string>();
  if (type == "import") {
    source_split_ = j.at("source_split").get<std::string>();
    evaluated_records_ = j.at("records").get<int>();
  } else if (type == "case") {
    ErrorCase c;
    c.video_id = j.at("video_id").get<std::string>();
    c.true_label = j.at("true_label").get<std::string>();
    c.predicted_label = j.at("predicted_label").get<std::string>();
    c.scores = j.at("scores").get<std::vector<double>>();
    c.confidence = j.at("confidence").get<double>();
    if (case_index_.count(c.video_id)) return;
    case_index_[c.video_id] = cases_.size();
    cases_.push_back(std::move(c));
  } else if (type == "category") {
    register_category(j.at("name").get<std::string>());
  } else if (type == "effort") {
    efforts_[j.at("category").get<std::string>()] = parse_effort(j.at("effort").get<std::string>());
  } else if (type == "assignment") {
    CategoryAssignment a;
    a.video_id = j.at("video_id").get<std::string>();
    for (const auto& c : j.at("categories")) a.categories.insert(c.get<std::string>());
    a.comment = j.value("comment", "");
    a.reviewer = j.value("reviewer", "");
    a.timestamp_ms = j.at("timestamp").get<std::int64_t>();
    for (const auto& c : a.categories) register_category(c);
    last_timestamp_ = std::max(last_timestamp_, a.timestamp_ms);
    history_[a.video_id].push_back(std::move(a));
  } else {
    throw DataError("unknown triage event type '" + type + "'");
  }
}

ImportSummary TriageStore::import_cases(const std::vector<ErrorCase>& cases, const std::string& source_split,
                                        int evaluated_records) {
  std::lock_guard lock(mutex_);
  ImportSummary s;
  const json header{{"type", "import"}, {"source_split", source_split}, {"records", evaluated_records}};
  append(header.dump());
  apply(header.dump());
  for (const auto& c : cases) {
    if (c.true_label == c.predicted_label) {
      throw InvalidArgument("case '" + c.video_id + "' is not a misclassification", "predicted_label");
    }
    if (case_index_.count(c.video_id)) {
      ++s.already_present;
      continue;
    }
    const auto line = case_event(c).dump();
    append(line);
    apply(line);
    ++s.added;
  }
  return s;
}

ErrorCase TriageStore::with_status(const ErrorCase& c) const {
  ErrorCase out = c;
  auto it = history_.find(c.video_id);
  out.status = it != history_.end() && !it->second.empty() ? ReviewStatus::kReviewed : ReviewStatus::kUnreviewed;
  return out;
}

std::vector<ErrorCase> TriageStore::cases(const CaseFilter& filter) const {
  std::lock_guard lock(mutex_);
  std::vector<ErrorCase> out;
  for (const auto& c : cases_) {
    auto e = with_status(c);
    if (filter.status && e.status != *filter.status) continue;
    if (filter.true_class && e.true_label != *filter.true_class) continue;
    out.push_back(std::move(e));
  }
  sort_for_review(out);
  return out;
}

ErrorCase TriageStore::get_case(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = case_index_.find(id);
  if (it == case_index_.end()) throw NotFoundError("no error case '" + id + "'");
  return with_status(cases_[it->second]);
}

std::vector<CategoryAssignment> TriageStore::history(const std::string& id) const {
  std::lock_guard lock(mutex_);
  if (!case_index_.count(id)) throw NotFoundError("no error case '" + id + "'");
  auto it = history_.find(id);
  return it == history_.end() ? std::vector<CategoryAssignment>{} : it->second;
}

std::optional<CategoryAssignment> TriageStore::current(const std::string& id) const {
  std::lock_guard lock(mutex_);
  if (!case_index_.count(id)) throw NotFoundError("no error case '" + id + "'");
  auto it = history_.find(id);
  if (it == history_.end()) return std::nullopt;
  const auto* a = latest(it->second);
  return a ? std::optional<CategoryAssignment>(*a) : std::nullopt;
}

ErrorCase TriageStore::assign(const std::string& id, const std::set<std::string>& categories,
                              const std::string& comment, const std::string& reviewer,
                              std::optional<std::int64_t> timestamp_ms) {
  if (categories.empty()) throw InvalidArgument("an assignment needs at least one category", "categories");
  for (const auto& c : categories) {
    if (c.empty()) throw InvalidArgument("category names must be nonempty", "categories");
  }
  std::lock_guard lock(mutex_);
  auto it = case_index_.find(id);
  if (it == case_index_.end()) throw NotFoundError("no error case '" + id + "'");
  std::int64_t ts;
  if (timestamp_ms) {
    ts = *timestamp_ms;
  } else {
    ts = std::max(now_ms(), last_timestamp_ + 1);
  }
  for (const auto& c : categories) {
    if (std::find(categories_.begin(), categories_.end(), c) == categories_.end()) {
      const json ev{{"type", "category"}, {"name", c}};
      append(ev.dump());
      apply(ev.dump());
    }
  }
  const json ev{{"type", "assignment"}, {"video_id", id},      {"categories", categories},
                {"comment", comment},   {"reviewer", reviewer}, {"timestamp", ts}};
  append(ev.dump());
  apply(ev.dump());
  return with_status(cases_[it->second]);
}

std::vector<std::string> TriageStore::categories() const {
  std::lock_guard lock(mutex_);
  return categories_;
}

bool TriageStore::add_category(const std::string& name) {
  if (name.empty()) throw InvalidArgument("category name must be nonempty", "name");
  std::lock_guard lock(mutex_);
  if (std::find(categories_.begin(), categories_.end(), name) != categories_.end()) return false;
  const json ev{{"type", "category"}, {"name", name}};
  append(ev.dump());
  apply(ev.dump());
  return true;
}

void TriageStore::set_effort(const std::string& category, Effort effort) {
  std::lock_guard lock(mutex_);
  const json ev{{"type", "effort"}, {"category", category}, {"effort", to_string(effort)}};
  append(ev.dump());
  apply(ev.dump());
}

std::map<std::string, Effort> TriageStore::efforts() const {
  std::lock_guard lock(mutex_);
  return efforts_;
}

CategoryReport TriageStore::report_locked() const {
  std::map<std::string, std::set<std::string>> current;
  for (const auto& [id, h] : history_) {
    if (const auto* a = latest(h)) current[id] = a->categories;
  }
  return build_report(static_cast<int>(cases_.size()), current, categories_, source_split_);
}

CategoryReport TriageStore::report() const {
  std::lock_guard lock(mutex_);
  return report_locked();
}

std::string TriageStore::source_split() const {
  std::lock_guard lock(mutex_);
  return source_split_;
}

int TriageStore::evaluated_records() const {
  std::lock_guard lock(mutex_);
  return evaluated_records_;
}

CategoryReport report_from_log(const std::filesystem::path& log_path) {
  if (!std::filesystem::exists(log_path)) throw NotFoundError("no triage log at " + log_path.string());
  // Replay independently of TriageStore so the log alone determines the report.
  std::ifstream in(log_path);
  std::vector<std::string> order = seeded_categories();
  std::set<std::string> case_ids;
  std::map<std::string, std::pair<std::int64_t, std::set<std::string>>> current;
  std::string source;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    const auto type = j.at("type").get<std::string>();
    if (type == "import") {
      source = j.at("source_split").get<std::string>();
    } else if (type == "case") {
      case_ids.insert(j.at("video_id").get<std::string>());
    } else if (type == "category") {
      const auto name = j.at("name").get<std::string>();
      if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
    } else if (type == "assignment") {
      const auto id = j.at("video_id").get<std::string>();
      const auto ts = j.at("timestamp").get<std::int64_t>();
      auto it = current.find(id);
      if (it == current.end() || ts >= it->second.first) {
        current[id] = {ts, j.at("categories").get<std::set<std::string>>()};
      }
    }
  }
  std::map<std::string, std::set<std::string>> sets;
  for (auto& [id, v] : current) sets[id] = v.second;
  return build_report(static_cast<int>(case_ids.size()), sets, order, source);
}

}  // namespace sfk::triage
