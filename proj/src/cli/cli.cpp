#include "sfk/cli/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "sfk/cli/experiment.hpp"
#include "sfk/data/histogram.hpp"
#include "sfk/data/manifest.hpp"
#include "sfk/data/video.hpp"
#include "sfk/error.hpp"
#include "sfk/eval/ensemble.hpp"
#include "sfk/log.hpp"
#include "sfk/model/checkpoint.hpp"
#include "sfk/train/trainer.hpp"
#include "sfk/triage/server.hpp"

namespace sfk::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  long seed = -1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "experiment config file (model./train./data./eval. keys)");
  cmd->add_option("-s,--set", c.overrides, "override a config key, key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "seed for training and splitting");
}

ExperimentConfig resolve_config(const Common& c, const std::vector<std::string>& extra = {}) {
  auto overrides = c.overrides;
  overrides.insert(overrides.end(), extra.begin(), extra.end());
  if (c.seed >= 0) {
    overrides.push_back("train.seed=" + std::to_string(c.seed));
    overrides.push_back("data.split_seed=" + std::to_string(c.seed));
  }
  const auto doc = load_experiment_doc(c.config, overrides);
  return parse_experiment(doc, c.config.empty() ? fs::path{} : fs::path(c.config).parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

void write_snapshot(const fs::path& dir, const KeyValueDoc& doc, const std::string& command) {
  write_text(dir / "resolved_config.cfg", doc.to_string("resolved configuration for `sfkit " + command + "`"));
}

bool is_video_file(const fs::path& p) {
  static const std::set<std::string> exts{".avi", ".mp4", ".mkv", ".mov", ".webm", ".m4v", ".mpg", ".mpeg"};
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return exts.count(e) != 0;
}

/// THETIS-style names start with the player, e.g. "p12_foreflat_s2".
std::string player_from_stem(const std::string& stem) {
  const auto u = stem.find('_');
  return u == std::string::npos ? std::string("unknown") : stem.substr(0, u);
}

data::DatasetManifest scan_video_tree(const fs::path& root) {
  if (!fs::is_directory(root)) throw DataError("video root " + root.string() + " is not a directory");
  std::vector<std::string> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) dirs.push_back(e.path().filename().string());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw DataError("video root " + root.string() + " has no class subdirectories");
  data::DatasetManifest m;
  const auto& thetis = data::thetis_classes();
  const bool all_thetis =
      std::all_of(dirs.begin(), dirs.end(), [&](const std::string& d) { return std::find(thetis.begin(), thetis.end(), d) != thetis.end(); });
  if (all_thetis) {
    for (const auto& c : thetis) {
      if (std::find(dirs.begin(), dirs.end(), c) != dirs.end()) m.classes.push_back(c);
    }
  } else {
    m.classes = dirs;
  }
  std::set<std::string> ids;
  for (std::size_t ci = 0; ci < m.classes.size(); ++ci) {
    std::vector<fs::path> items;
    for (const auto& e : fs::directory_iterator(root / m.classes[ci])) {
      if ((e.is_regular_file() && is_video_file(e.path())) || e.is_directory()) items.push_back(e.path());
    }
    std::sort(items.begin(), items.end());
    for (const auto& p : items) {
      data::VideoRecord r;
      r.id = p.stem().string();
      if (!ids.insert(r.id).second) {
        throw DataError("duplicate video id '" + r.id + "' under " + root.string() + "; provide a listing instead");
      }
      r.path = fs::absolute(p).string();
      r.class_label = m.classes[ci];
      r.class_index = static_cast<int>(ci);
      r.player_id = player_from_stem(r.id);
      m.records.push_back(std::move(r));
    }
  }
  m.source_note = "scanned from " + fs::absolute(root).string();
  return m;
}

std::string split_summary(const data::DatasetManifest& m) {
  std::ostringstream out;
  out << "class\ttrain\tval\ttest\n";
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    int n[3] = {0, 0, 0};
    for (const auto& r : m.records) {
      if (r.class_index != static_cast<int>(c)) continue;
      if (r.split == data::Split::kTrain) ++n[0];
      if (r.split == data::Split::kVal) ++n[1];
      if (r.split == data::Split::kTest) ++n[2];
    }
    out << m.classes[c] << '\t' << n[0] << '\t' << n[1] << '\t' << n[2] << '\n';
  }
  return out.str();
}

int cmd_prepare(const Common& common, const std::string& videos, const std::string& listing, const std::string& out_dir,
                std::ostream& out) {
  const auto cfg = resolve_config(common);
  if (videos.empty() == listing.empty()) throw ConfigError("prepare needs exactly one of --videos or --listing");
  data::DatasetManifest m = videos.empty() ? data::load_manifest(listing, {.allow_unprobed = true}) : scan_video_tree(videos);
  if (!listing.empty()) {
    // Make paths independent of where the prepared manifest ends up.
    for (auto& r : m.records) r.path = fs::absolute(m.resolve(r)).string();
  }
  int probed = 0;
  for (auto& r : m.records) {
    if (r.frame_count > 0 && r.duration > 0) continue;
    try {
      const auto p = data::probe_video(r.path);
      r.frame_count = p.frame_count;
      r.duration = p.duration;
      ++probed;
    } catch (const DataError& e) {
      throw DataError("record '" + r.id + "': " + e.what());
    }
  }
  const auto spec = data::make_splits(m, cfg.data.split_ratios, cfg.data.split_seed, {cfg.data.group_by_player});
  for (const auto& w : spec.warnings) log_warn(w);
  data::apply_splits(m, spec);

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  m.base_dir = dir;
  data::write_manifest(m, dir / "manifest.csv");
  write_text(dir / "splits.tsv", split_summary(m));
  write_text(dir / "length_histogram.tsv", data::class_length_histogram(m, cfg.data.histogram_edges).to_delimited());
  auto resolved = cfg;
  resolved.data.manifest = fs::absolute(dir / "manifest.csv");
  write_snapshot(dir, resolved.to_kv(), "prepare");
  out << "prepared " << m.records.size() << " records in " << m.classes.size() << " classes (" << probed
      << " probed) -> " << (dir / "manifest.csv").string() << '\n';
  return kExitOk;
}

data::SplitSpec spec_from_manifest(const data::DatasetManifest& m) {
  data::SplitSpec s;
  for (const auto& r : m.records) s.assignment[r.id] = r.split;
  return s;
}

int cmd_train(const Common& common, const std::string& out_dir, std::ostream& out) {
  const auto cfg = resolve_config(common);
  if (cfg.data.manifest.empty()) throw ConfigError("train needs data.manifest (from `sfkit prepare`)");
  const auto manifest = data::load_manifest(cfg.data.manifest);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_snapshot(dir, cfg.to_kv(), "train");
  train::TrainOptions opts;
  opts.output_dir = dir;
  opts.cache_dir = cfg.data.cache_dir;
  opts.memory_budget_bytes = cfg.data.memory_budget_mb << 20;
  const auto run = train::train(cfg.model, manifest, spec_from_manifest(manifest), cfg.train, opts);
  json summary{{"epochs", run.history.size()},
               {"best_epoch", run.best_epoch},
               {"best_val_error", run.best_val_error},
               {"stopped_early", run.stopped_early}};
  write_text(dir / "run.json", summary.dump(2) + "\n");
  out << "trained " << run.history.size() << " epochs; best epoch " << run.best_epoch << " (val error "
      << kv::format_real(run.best_val_error) << "%) -> " << (dir / "best.ckpt").string() << '\n';
  return kExitOk;
}

/// Table labels for model configs.
std::string architecture_label(const model::SlowFastConfig& m) {
  const bool r50 = m.backbone_depth == std::array<int, 4>{3, 4, 6, 3};
  return "SlowFast " + m.name + (r50 ? ", R50" : "");
}

int cmd_evaluate(const Common& common, const std::string& checkpoint, const std::string& ensemble,
                 const std::string& split, const std::string& manifest_path, const std::string& out_dir,
                 std::ostream& out) {
  std::vector<std::string> extra;
  if (!ensemble.empty()) extra.push_back("eval.protocol=" + ensemble);
  if (!split.empty()) extra.push_back("eval.split=" + split);
  if (!manifest_path.empty()) extra.push_back("data.manifest=" + manifest_path);
  auto cfg = resolve_config(common, extra);
  auto loaded = model::load_checkpoint(checkpoint);
  cfg.model = loaded.network->config();
  cfg.train = train::train_config_from_entries(loaded.meta.train_config.entries());
  if (cfg.data.manifest.empty()) throw ConfigError("evaluate needs data.manifest or --manifest");
  const auto manifest = data::load_manifest(cfg.data.manifest);
  if (manifest.classes.size() != static_cast<std::size_t>(cfg.model.num_classes)) {
    throw ConfigError("checkpoint has " + std::to_string(cfg.model.num_classes) + " classes, manifest has " +
                      std::to_string(manifest.classes.size()));
  }
  const auto records = manifest.records_in(cfg.eval.split);
  if (records.empty()) throw DataError("no records in the " + data::to_string(cfg.eval.split) + " split");

  data::VideoSource source(manifest, {cfg.data.cache_dir, cfg.data.memory_budget_mb << 20});
  const auto preds = eval::evaluate_records(*loaded.network, source, records, cfg.eval.protocol, cfg.eval.score_domain,
                                            cfg.eval.workers);
  const auto cm = eval::confusion_matrix(preds, manifest.classes);

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  auto snapshot = cfg.to_kv();
  snapshot.set("eval.checkpoint", fs::absolute(checkpoint).string());
  write_snapshot(dir, snapshot, "evaluate");
  eval::write_predictions(dir / "predictions.jsonl", preds);
  write_text(dir / "confusion.tsv", cm.to_delimited('\t'));
  {
    std::ostringstream pc;
    pc << "class\tcorrect\ttotal\taccuracy (%)\n";
    const auto acc = eval::per_class_accuracy(cm);
    for (std::size_t c = 0; c < cm.size(); ++c) {
      pc << manifest.classes[c] << '\t' << cm.count(static_cast<int>(c), static_cast<int>(c)) << '\t'
         << cm.row_total(static_cast<int>(c)) << '\t';
      if (acc[c]) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", *acc[c]);
        pc << buf;
      } else {
        pc << "n/a";
      }
      pc << '\n';
    }
    write_text(dir / "per_class.tsv", pc.str());
  }
  const int correct = eval::correct_count(preds);
  json metrics{{"architecture", architecture_label(cfg.model)},
               {"split", data::to_string(cfg.eval.split)},
               {"protocol", to_string(cfg.eval.protocol)},
               {"views_per_video", cfg.eval.protocol == eval::EvalProtocol::kEnsemble3x2 ? 6 : 1},
               {"correct", correct},
               {"total", preds.size()},
               {"accuracy", eval::accuracy(preds)},
               {"error_rate", eval::error_rate(preds)},
               {"checkpoint_epoch", loaded.meta.epoch},
               {"train_accuracy", 100.0 - loaded.meta.train_error},
               {"val_accuracy", 100.0 - loaded.meta.val_error}};
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  out << "evaluated " << preds.size() << " " << data::to_string(cfg.eval.split) << " videos ("
      << to_string(cfg.eval.protocol) << "): accuracy " << kv::format_real(eval::accuracy(preds)) << "% (" << correct
      << "/" << preds.size() << ") -> " << dir.string() << '\n';
  return kExitOk;
}

std::string format2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// One row per evaluated architecture.
std::string architecture_table(const std::vector<std::string>& eval_dirs) {
  std::ostringstream out;
  out << "architecture\ttrain accuracy (%)\tvalidation accuracy (%)\ttest accuracy (%)\ttest correct\ttest total\tviews\n";
  for (const auto& d : eval_dirs) {
    const fs::path p = fs::path(d) / "metrics.json";
    std::ifstream in(p);
    if (!in) throw DataError("no metrics.json in " + d + " (run `sfkit evaluate` first)");
    json m;
    try {
      m = json::parse(in);
      out << m.at("architecture").get<std::string>() << '\t' << format2(m.at("train_accuracy").get<double>()) << '\t'
          << format2(m.at("val_accuracy").get<double>()) << '\t' << format2(m.at("accuracy").get<double>()) << '\t'
          << m.at("correct").get<int>() << '\t' << m.at("total").get<int>() << '\t'
          << m.at("views_per_video").get<int>() << '\n';
    } catch (const json::exception& e) {
      throw DataError(p.string() + ": " + e.what());
    }
  }
  return out.str();
}

int cmd_report(const std::vector<std::string>& eval_dirs, const std::string& triage_log, const std::string& out_dir,
               bool with_ranking, std::ostream& out) {
  if (eval_dirs.empty() && triage_log.empty()) throw ConfigError("report needs --eval directories and/or --triage");
  std::string architectures, categories;
  if (!eval_dirs.empty()) architectures = architecture_table(eval_dirs);
  if (!triage_log.empty()) {
    triage::TriageStore store(triage_log);
    const auto rep = store.report();
    categories = rep.to_delimited('\t');
    if (with_ranking && !rep.empty) {
      const auto efforts = store.efforts();
      std::ostringstream r;
      r << "rank\tcategory\tamount (%)\teffort\tscore\n";
      for (const auto& x : triage::rank_categories(rep, efforts.empty() ? std::nullopt : std::optional(efforts))) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.1f\t%s\t%.2f", x.percent, x.effort ? triage::to_string(*x.effort).c_str() : "-",
                      x.score);
        r << x.rank << '\t' << x.category << '\t' << buf << '\n';
      }
      categories += "\n" + r.str();
    }
  }
  if (out_dir.empty()) {
    out << architectures;
    if (!architectures.empty() && !categories.empty()) out << '\n';
    out << categories;
    return kExitOk;
  }
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  if (!architectures.empty()) write_text(dir / "architectures.tsv", architectures);
  if (!categories.empty()) write_text(dir / "error_categories.tsv", categories);
  out << "report written to " << dir.string() << '\n';
  return kExitOk;
}

std::atomic<triage::TriageServer*> g_server{nullptr};

extern "C" void on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

int cmd_triage_serve(const std::string& store_path, const std::string& predictions, const std::string& manifest_path,
                     const std::string& source_split, const std::string& host, int port, bool import_only,
                     std::ostream& out) {
  if (store_path.empty()) throw ConfigError("triage-serve needs --store");
  triage::TriageStore store(store_path);
  std::optional<data::DatasetManifest> manifest;
  if (!manifest_path.empty()) manifest = data::load_manifest(manifest_path);
  triage::ServerOptions opts;
  opts.host = host;
  opts.port = port;
  if (!predictions.empty()) {
    if (!manifest) throw ConfigError("--predictions needs --manifest for class names");
    const auto preds = eval::read_predictions(predictions);
    const auto errors = triage::collect_errors(preds, manifest->classes);
    const auto s = store.import_cases(errors, source_split, static_cast<int>(preds.size()));
    opts.confusion = eval::confusion_matrix(preds, manifest->classes);
    out << "imported " << s.added << " error cases (" << s.already_present << " already present) from "
        << preds.size() << " " << source_split << " predictions\n";
  }
  if (manifest) {
    const auto m = *manifest;
    opts.media_for = [m](const std::string& id) -> std::optional<fs::path> {
      const auto* r = m.find(id);
      if (!r) return std::nullopt;
      return m.resolve(*r);
    };
  }
  if (import_only) return kExitOk;
  triage::TriageServer server(store, opts);
  const int bound = server.bind();
  out << "triage API listening on http://" << host << ":" << bound << "/api/cases" << std::endl;
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.serve();
  g_server = nullptr;
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kConfig:
    case ErrorKind::kInvalidArgument: return kExitConfig;
    case ErrorKind::kData:
    case ErrorKind::kNotFound: return kExitData;
    case ErrorKind::kStructural:
    case ErrorKind::kRuntime: return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-pathway video action classifier toolkit", "sfkit"};
  app.require_subcommand(1);
  Common common;

  auto* prepare = app.add_subcommand("prepare", "build a manifest with probed lengths and splits");
  std::string videos, listing, out_dir;
  add_common(prepare, common);
  prepare->add_option("--videos", videos, "directory with one subdirectory of videos per class");
  prepare->add_option("--listing", listing, "manifest listing; blank frames/duration are probed");
  prepare->add_option("-o,--out", out_dir, "output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "train a model and record its history");
  add_common(train_cmd, common);
  train_cmd->add_option("-o,--out", out_dir, "run directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on one split");
  std::string checkpoint, ensemble, split, manifest;
  add_common(evaluate, common);
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--ensemble", ensemble, "3x2 (three crops x two windows, summed) or 1x1");
  evaluate->add_option("--split", split, "train, val or test (default test)");
  evaluate->add_option("--manifest", manifest, "prepared manifest (overrides data.manifest)");
  evaluate->add_option("-o,--out", out_dir, "output directory")->required();

  auto* report = app.add_subcommand("report", "architecture and error-category tables");
  std::vector<std::string> eval_dirs;
  std::string triage_log;
  bool ranking = false;
  report->add_option("--eval", eval_dirs, "evaluate output directories, one table row each");
  report->add_option("--triage", triage_log, "triage store log");
  report->add_flag("--ranking", ranking, "append the fix-next ranking to the category table");
  report->add_option("-o,--out", out_dir, "write files here instead of stdout");

  auto* serve = app.add_subcommand("triage-serve", "serve the error triage HTTP API");
  std::string store_path, predictions, source_split = "test", host = "127.0.0.1";
  int port = 8765;
  bool import_only = false;
  serve->add_option("--store", store_path, "triage log file (created if missing)")->required();
  serve->add_option("--predictions", predictions, "predictions.jsonl to import error cases from");
  serve->add_option("--manifest", manifest, "manifest for class names and media files");
  serve->add_option("--source-split", source_split, "split the predictions come from (recorded in reports)");
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port (0 picks a free one)");
  serve->add_flag("--import-only", import_only, "import and exit without serving");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "sfkit: " << e.what() << "\n" << "run `sfkit --help` for usage\n";
    return kExitConfig;
  }

  try {
    if (prepare->parsed()) return cmd_prepare(common, videos, listing, out_dir, out);
    if (train_cmd->parsed()) return cmd_train(common, out_dir, out);
    if (evaluate->parsed()) return cmd_evaluate(common, checkpoint, ensemble, split, manifest, out_dir, out);
    if (report->parsed()) return cmd_report(eval_dirs, triage_log, out_dir, ranking, out);
    if (serve->parsed()) {
      return cmd_triage_serve(store_path, predictions, manifest, source_split, host, port, import_only, out);
    }
  } catch (const Error& e) {
    const int code = exit_code_for(e);
    const char* kind = code == kExitConfig ? "config error" : code == kExitData ? "data error" : "runtime error";
    err << "sfkit: " << kind << ": " << e.what() << '\n';
    return code;
  } catch (const std::exception& e) {
    err << "sfkit: runtime error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace sfk::cli
