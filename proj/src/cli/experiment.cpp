#include "sfk/cli/experiment.hpp"

#include "sfk/error.hpp"

namespace sfk::cli {
namespace fs = std::filesystem;

std::string to_string(eval::EvalProtocol p) { return p == eval::EvalProtocol::kEnsemble3x2 ? "3x2" : "1x1"; }

eval::EvalProtocol parse_protocol(const std::string& text) {
  if (text == "3x2") return eval::EvalProtocol::kEnsemble3x2;
  if (text == "1x1") return eval::EvalProtocol::kSingleClip;
  throw ConfigError("ensemble must be 3x2 or 1x1, got '" + text + "'");
}

KeyValueDoc DataConfig::to_kv() const {
  KeyValueDoc d;
  d.set("manifest", manifest.string());
  d.set("cache_dir", cache_dir.string());
  d.set("split_ratios", kv::join(std::vector<double>(split_ratios.begin(), split_ratios.end())));
  d.set("split_seed", std::to_string(split_seed));
  d.set("group_by_player", group_by_player ? "true" : "false");
  d.set("histogram_edges", kv::join(histogram_edges));
  d.set("memory_budget_mb", std::to_string(memory_budget_mb));
  return d;
}

KeyValueDoc EvalConfig::to_kv() const {
  KeyValueDoc d;
  d.set("protocol", to_string(protocol));
  d.set("score_domain", score_domain == eval::ScoreDomain::kProbability ? "probability" : "logit");
  d.set("split", data::to_string(split));
  d.set("workers", std::to_string(workers));
  return d;
}

namespace {

void append_prefixed(KeyValueDoc& out, const std::string& prefix, const KeyValueDoc& section) {
  for (const auto& [k, v] : section.entries()) out.set(prefix + k, v);
}

fs::path resolve(const fs::path& base, const std::string& value) {
  if (value.empty()) return {};
  fs::path p(value);
  return p.is_absolute() || base.empty() ? p : base / p;
}

DataConfig parse_data(const std::vector<std::pair<std::string, std::string>>& entries, const fs::path& base) {
  DataConfig c;
  for (const auto& [key, value] : entries) {
    if (key == "manifest") {
      c.manifest = resolve(base, value);
    } else if (key == "cache_dir") {
      c.cache_dir = resolve(base, value);
    } else if (key == "split_ratios") {
      const auto r = kv::parse_real_list(key, value);
      if (r.size() != 3) throw ConfigError("data.split_ratios needs three fractions (train,val,test)");
      c.split_ratios = {r[0], r[1], r[2]};
    } else if (key == "split_seed") {
      const long s = kv::parse_int(key, value);
      if (s < 0) throw ConfigError("data.split_seed must be nonnegative");
      c.split_seed = static_cast<std::uint64_t>(s);
    } else if (key == "group_by_player") {
      c.group_by_player = kv::parse_bool(key, value);
    } else if (key == "histogram_edges") {
      c.histogram_edges = kv::parse_real_list(key, value);
    } else if (key == "memory_budget_mb") {
      const long m = kv::parse_int(key, value);
      if (m < 0) throw ConfigError("data.memory_budget_mb must be nonnegative");
      c.memory_budget_mb = static_cast<std::size_t>(m);
    } else {
      throw ConfigError("unknown data config key '" + key + "'");
    }
  }
  return c;
}

EvalConfig parse_eval(const std::vector<std::pair<std::string, std::string>>& entries) {
  EvalConfig c;
  for (const auto& [key, value] : entries) {
    if (key == "protocol") {
      c.protocol = parse_protocol(value);
    } else if (key == "score_domain") {
      if (value == "probability") {
        c.score_domain = eval::ScoreDomain::kProbability;
      } else if (value == "logit") {
        c.score_domain = eval::ScoreDomain::kLogit;
      } else {
        throw ConfigError("eval.score_domain must be probability or logit, got '" + value + "'");
      }
    } else if (key == "split") {
      c.split = data::parse_split(value);
      if (c.split == data::Split::kUnassigned) throw ConfigError("eval.split must be train, val or test");
    } else if (key == "workers") {
      c.workers = static_cast<int>(kv::parse_int(key, value));
      if (c.workers < 1) throw ConfigError("eval.workers must be at least 1");
    } else {
      throw ConfigError("unknown eval config key '" + key + "'");
    }
  }
  return c;
}

}  // namespace

KeyValueDoc ExperimentConfig::to_kv() const {
  KeyValueDoc d;
  append_prefixed(d, "model.", model.to_kv());
  append_prefixed(d, "train.", train.to_kv());
  append_prefixed(d, "data.", data.to_kv());
  append_prefixed(d, "eval.", eval.to_kv());
  return d;
}

ExperimentConfig parse_experiment(const KeyValueDoc& doc, const fs::path& base_dir) {
  std::vector<std::pair<std::string, std::string>> m, t, d, e;
  for (const auto& [key, value] : doc.entries()) {
    const auto dot = key.find('.');
    const auto section = dot == std::string::npos ? key : key.substr(0, dot);
    const auto rest = dot == std::string::npos ? std::string{} : key.substr(dot + 1);
    if (rest.empty()) throw ConfigError("config key '" + key + "' needs a section prefix (model., train., data., eval.)");
    if (section == "model") {
      m.emplace_back(rest, value);
    } else if (section == "train") {
      t.emplace_back(rest, value);
    } else if (section == "data") {
      d.emplace_back(rest, value);
    } else if (section == "eval") {
      e.emplace_back(rest, value);
    } else {
      throw ConfigError("unknown config section in key '" + key + "'");
    }
  }
  ExperimentConfig c;
  c.model = model::config_from_entries(m);
  c.train = train::train_config_from_entries(t);
  c.data = parse_data(d, base_dir);
  c.eval = parse_eval(e);
  return c;
}

KeyValueDoc load_experiment_doc(const fs::path& path, const std::vector<std::string>& overrides) {
  KeyValueDoc doc = path.empty() ? KeyValueDoc{} : KeyValueDoc::load(path);
  for (const auto& o : overrides) doc.apply_override(o);
  return doc;
}

}  // namespace sfk::cli
