// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
// `sfk_acceptance <name-substring>` runs a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "sfk/cli/cli.hpp"
#include "sfk/data/preprocess.hpp"
#include "sfk/data/splits.hpp"
#include "sfk/data/synthetic.hpp"
#include "sfk/eval/ensemble.hpp"
#include "sfk/eval/metrics.hpp"
#include "sfk/log.hpp"
#include "sfk/model/config.hpp"
#include "sfk/model/slowfast.hpp"
#include "sfk/train/trainer.hpp"
#include "sfk/triage/triage.hpp"
#include "support.hpp"

using namespace sfk;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 2) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string shape_text(const Shape& s) { return shape_string(s); }

Outcome architecture_shapes() {
  const auto cfg = model::preset("4x16");
  const auto net = model::build_slowfast(cfg, 1);
  const auto clips = testing::random_clips(cfg, 1, 2);
  const auto tr = net->trace(clips);
  const bool inputs = tr.slow_input[2] == 4 && tr.fast_input[2] == 32;
  const auto& s = tr.slow_features.shape();
  const auto& f = tr.fast_features.shape();
  const bool features = s[2] == 4 && s[3] == 7 && s[4] == 7 && f[2] == 32 && f[3] == 7 && f[4] == 7;
  return {inputs && features, "slow input " + shape_text(tr.slow_input) + ", fast input " + shape_text(tr.fast_input) +
                                  ", slow features " + shape_text(s) + ", fast features " + shape_text(f)};
}

Outcome preset_consistency() {
  bool ok = true;
  std::string detail;
  for (const auto& name : model::preset_names()) {
    const auto cfg = model::preset(name);
    const bool frames = cfg.fast_frames() == cfg.alpha * cfg.slow_frames();
    bool ratio = true;
    for (const auto& st : cfg.channel_plan()) {
      // Fast widths are the slow widths times beta, rounded.
      ratio = ratio && st.fast_out == static_cast<int>(std::lround(st.slow_out * cfg.beta.value())) &&
              st.fast_inner == static_cast<int>(std::lround(st.slow_inner * cfg.beta.value()));
    }
    ok = ok && frames && ratio && cfg.beta == model::Ratio{1, 8};
    detail += name + ": " + std::to_string(cfg.slow_frames()) + "/" + std::to_string(cfg.fast_frames()) +
              " frames, alpha " + std::to_string(cfg.alpha) + ", beta " + cfg.beta.to_string() +
              (ratio ? "" : " (width mismatch)") + "; ";
  }
  return {ok, detail};
}

Outcome gradient_check() {
  const auto cfg = testing::gradcheck_config();
  auto net = model::build_slowfast(cfg, 11);
  testing::randomize_batchnorm(*net, 12);
  const auto clips = testing::random_clips(cfg, 2, 13);
  const auto r = testing::input_gradient_check(*net, clips, 24, 14);
  const bool ok = r.coordinates >= 20 && r.worst_relative_error < 1e-3 && r.slow_stem_grad_norm > 0 &&
                  r.fast_stem_grad_norm > 0;
  std::ostringstream d;
  d << r.coordinates << " coordinates, worst relative error " << r.worst_relative_error << ", stem grad norms slow "
    << r.slow_stem_grad_norm << " fast " << r.fast_stem_grad_norm;
  return {ok, d.str()};
}

Outcome synthetic_overfit() {
  testing::TempDir dir("acc-overfit");
  data::SyntheticDatasetSpec spec;
  spec.classes = {"left", "right"};
  spec.per_class = 4;
  spec.seed = 1;
  auto manifest = data::write_synthetic_dataset(dir / "data", spec);
  // Validation re-scores the training videos from random clips; the
  // criterion itself is eval-mode accuracy on the training set.
  const auto n = manifest.records.size();
  data::SplitSpec splits;
  for (std::size_t i = 0; i < n; ++i) {
    auto copy = manifest.records[i];
    splits.assignment[copy.id] = data::Split::kTrain;
    copy.id += "-val";
    splits.assignment[copy.id] = data::Split::kVal;
    manifest.records.push_back(copy);
  }
  std::vector<const data::VideoRecord*> train_records;
  for (std::size_t i = 0; i < n; ++i) train_records.push_back(&manifest.records[i]);

  train::TrainConfig tc;
  tc.epochs_max = 200;
  tc.early_stop_patience = 200;
  tc.batch_size = 4;
  tc.learning_rate = 0.05;
  tc.dropout_rate = 0.0;
  tc.weight_decay = 0.0;
  tc.augmentation.flip_prob = 0.0;  // a flip turns left motion into right motion
  tc.checkpoint_every = 0;
  const auto cfg = testing::micro_4x16(2);

  data::VideoSource source(manifest);
  double best = 0.0;
  int reached = 0;
  int epochs = 0;
  train::TrainOptions opts;
  opts.output_dir = dir / "run";
  opts.on_epoch = [&](const train::EpochRecord& e, const model::SlowFastNetwork& net) {
    epochs = e.epoch;
    const auto preds = eval::evaluate_records(net, source, train_records, eval::EvalProtocol::kSingleClip);
    const double acc = eval::accuracy(preds);
    best = std::max(best, acc);
    if (acc >= 95.0) {
      reached = e.epoch;
      return false;
    }
    return true;
  };
  train::train(cfg, manifest, splits, tc, opts);
  return {reached > 0, "train accuracy " + fmt(best) + "% (eval mode, center clip) " +
                           (reached ? "reached at epoch " + std::to_string(reached)
                                    : "not reached in " + std::to_string(epochs) + " epochs")};
}

Outcome metric_oracle() {
  Rng rng(2024);
  int mismatches = 0;
  double worst_sum = 0.0;
  for (int set = 0; set < 1000; ++set) {
    const int classes = static_cast<int>(rng.uniform_int(2, 12));
    const int n = static_cast<int>(rng.uniform_int(1, 200));
    const auto recs = testing::random_records(rng, n, classes);
    int correct = 0;
    for (const auto& r : recs) correct += r.true_label == r.predicted_label ? 1 : 0;
    const double acc = eval::accuracy(recs);
    const double err = eval::error_rate(recs);
    if (std::abs(acc - 100.0 * correct / n) > 1e-9 || std::abs(err - 100.0 * (n - correct) / n) > 1e-9) ++mismatches;
    worst_sum = std::max(worst_sum, std::abs(acc + err - 100.0));
    std::vector<std::string> names;
    for (int c = 0; c < classes; ++c) names.push_back("c" + std::to_string(c));
    const auto cm = eval::confusion_matrix(recs, names);
    if (cm.trace() != correct || cm.total() != n) ++mismatches;
  }
  // Balanced sets: macro accuracy equals micro accuracy.
  double worst_macro = 0.0;
  for (int set = 0; set < 200; ++set) {
    const int classes = static_cast<int>(rng.uniform_int(2, 12));
    const int per = static_cast<int>(rng.uniform_int(1, 20));
    std::vector<eval::PredictionRecord> recs;
    std::vector<std::string> names;
    for (int c = 0; c < classes; ++c) {
      names.push_back("c" + std::to_string(c));
      for (int i = 0; i < per; ++i) {
        eval::PredictionRecord r;
        r.true_label = c;
        r.predicted_label = static_cast<int>(rng.uniform_int(0, classes - 1));
        recs.push_back(r);
      }
    }
    worst_macro = std::max(worst_macro, std::abs(eval::macro_accuracy(eval::confusion_matrix(recs, names)) -
                                                 eval::accuracy(recs)));
  }
  std::ostringstream d;
  d << "1000 sets, " << mismatches << " mismatches, max |acc+err-100| " << worst_sum << ", max |macro-micro| "
    << worst_macro;
  return {mismatches == 0 && worst_sum <= 1e-9 && worst_macro <= 1e-9, d.str()};
}

Outcome ensemble_suite() {
  // Real network: the ensemble equals a hand sum over the six rendered views.
  testing::TempDir dir("acc-ensemble");
  data::SyntheticDatasetSpec spec;
  spec.classes = {"left", "right"};
  spec.per_class = 2;
  spec.width = 64;
  spec.height = 40;
  const auto m = data::write_synthetic_dataset(dir.path(), spec);
  const auto cfg = testing::micro_4x16(2);
  auto net = model::build_slowfast(cfg, 5);
  testing::randomize_batchnorm(*net, 6);
  data::VideoSource source(m);
  const auto geometry = data::ClipGeometry::from(cfg);
  int video_mismatch = 0;
  for (const auto& rec : m.records) {
    const auto frames = source.frames(rec);
    std::vector<double> sum(2, 0.0);
    for (const auto& p : data::test_view_placements(*frames, geometry)) {
      const auto scores = net->predict(data::render_clip(*frames, p, geometry), true).scores;
      for (std::size_t k = 0; k < 2; ++k) sum[k] += scores[k];
    }
    const auto got = eval::ensemble_predict(*net, source, rec);
    const int expect = sum[1] > sum[0] ? 1 : 0;
    if (got.views_used != 6 || got.predicted_label != expect || std::abs(got.scores[0] - sum[0]) > 1e-9 ||
        std::abs(got.scores[1] - sum[1]) > 1e-9) {
      ++video_mismatch;
    }
  }
  // Random score sets: brute-force sum, view permutations and positive scaling.
  Rng rng(77);
  int set_mismatch = 0;
  for (int set = 0; set < 500; ++set) {
    const int k = static_cast<int>(rng.uniform_int(2, 12));
    std::vector<std::vector<double>> views(6, std::vector<double>(static_cast<std::size_t>(k)));
    for (auto& v : views)
      for (auto& x : v) x = rng.uniform(0, 1);
    int brute = 0;
    double best = -1e300;
    for (int c = 0; c < k; ++c) {
      double s = 0;
      for (const auto& v : views) s += v[static_cast<std::size_t>(c)];
      if (s > best) {
        best = s;
        brute = c;
      }
    }
    const int got = eval::argmax(eval::sum_view_scores(views));
    auto perm = views;
    rng.shuffle(perm.begin(), perm.end());
    const double scale = rng.uniform(0.01, 100);
    auto scaled = views;
    for (auto& v : scaled)
      for (auto& x : v) x *= scale;
    if (got != brute || eval::argmax(eval::sum_view_scores(perm)) != got ||
        eval::argmax(eval::sum_view_scores(scaled)) != got) {
      ++set_mismatch;
    }
  }
  return {video_mismatch == 0 && set_mismatch == 0,
          std::to_string(m.records.size()) + " videos x 6 views, " + std::to_string(video_mismatch) +
              " mismatches; 500 score sets, " + std::to_string(set_mismatch) + " mismatches"};
}

Outcome category_table() {
  triage::TriageStore store;
  store.import_cases(testing::error_cases(54), "test", 54);
  std::int64_t ts = 1;
  for (const auto& [id, cats] : testing::category_fixture()) store.assign(id, cats, "", "acceptance", ts++);
  const auto report = store.report();
  const std::pair<const char*, double> expected[] = {{"serve confusion", 44.4},
                                                     {"slice/volley confusion", 20.4},
                                                     {"smash/serve confusion", 16.7},
                                                     {"beginners", 9.3},
                                                     {"others", 14.8}};
  bool ok = report.total_errors == 54;
  std::string detail;
  for (const auto& [cat, pct] : expected) {
    const auto it = std::find_if(report.rows.begin(), report.rows.end(),
                                 [&](const triage::CategoryRow& r) { return r.category == cat; });
    if (it == report.rows.end()) return {false, std::string("missing category ") + cat};
    ok = ok && std::abs(it->percent - pct) < 0.05;
    detail += std::string(cat) + " " + std::to_string(it->count) + " = " + fmt(it->percent, 3) + "%; ";
  }
  ok = ok && triage::rank_categories(report)[0].category == "serve confusion";
  return {ok, detail + "over " + std::to_string(report.total_errors) + " errors"};
}

Outcome split_suite() {
  const auto m = testing::thetis_shaped_manifest();
  const data::SplitRatios ratios{0.7, 0.2, 0.1};
  const auto s = data::make_splits(m, ratios, 42);
  bool within = true;
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    std::array<int, 3> k{};
    for (const auto& r : m.records) {
      if (r.class_index != static_cast<int>(c)) continue;
      const auto sp = s.of(r.id);
      if (sp == data::Split::kTrain) ++k[0];
      if (sp == data::Split::kVal) ++k[1];
      if (sp == data::Split::kTest) ++k[2];
    }
    within = within && std::abs(k[0] - 115.5) <= 1 && std::abs(k[1] - 33) <= 1 && std::abs(k[2] - 16.5) <= 1 &&
             k[0] + k[1] + k[2] == 165;
  }
  const bool deterministic = data::make_splits(m, ratios, 42).assignment == s.assignment &&
                             data::make_splits(m, ratios, 43).assignment != s.assignment;
  const auto g = data::make_splits(m, ratios, 42, {.group_by_player = true});
  std::map<std::string, std::set<data::Split>> per_player;
  for (const auto& r : m.records) per_player[r.player_id].insert(g.of(r.id));
  bool disjoint = true;
  for (const auto& [p, splits] : per_player) disjoint = disjoint && splits.size() == 1;
  const auto counts = data::allocate_counts(165, ratios);
  return {within && deterministic && disjoint,
          "per class " + std::to_string(counts[0]) + "/" + std::to_string(counts[1]) + "/" +
              std::to_string(counts[2]) + (within ? " (within 1)" : " (out of range)") +
              (deterministic ? ", deterministic" : ", not deterministic") +
              (disjoint ? ", players disjoint" : ", players shared")};
}

Outcome chance_floor() {
  testing::TempDir dir("acc-chance");
  data::SyntheticDatasetSpec spec;
  spec.classes = data::thetis_classes();
  spec.kind = "noise";
  spec.per_class = 8;
  spec.width = 40;
  spec.height = 40;
  spec.seed = 3;
  const auto m = data::write_synthetic_dataset(dir.path(), spec);
  std::vector<const data::VideoRecord*> records;
  for (const auto& r : m.records) records.push_back(&r);
  data::VideoSource source(m);
  const auto cfg = testing::micro_4x16(12);
  double sum = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto net = model::build_slowfast(cfg, seed);
    const auto preds = eval::evaluate_records(*net, source, records, eval::EvalProtocol::kEnsemble3x2);
    const double acc = eval::accuracy(preds);
    sum += acc;
    detail += fmt(acc) + " ";
  }
  const double mean = sum / 5;
  return {std::abs(mean - 100.0 / 12) <= 3.0,
          "mean " + fmt(mean) + "% over seeds (" + detail + ") on " + std::to_string(records.size()) + " videos"};
}

int sfkit(const std::vector<std::string>& args, std::string& err) {
  std::ostringstream out, e;
  const int code = cli::run(args, out, e);
  err = e.str();
  return code;
}

Outcome end_to_end() {
  testing::TempDir dir("acc-e2e");
  data::SyntheticDatasetSpec spec;
  spec.classes = {"left", "right"};
  spec.per_class = 10;
  spec.probed = false;
  data::write_synthetic_dataset(dir / "raw", spec);
  const auto cfg = dir / "micro.cfg";
  std::ofstream(cfg) << "model.preset = 4x16\nmodel.num_classes = 2\nmodel.crop_size = 32\n"
                        "model.scale_short_side = 36\nmodel.slow.base_channels = 16\n"
                        "model.backbone_depth = 1,1,1,1\ntrain.epochs_max = 2\ntrain.batch_size = 4\n"
                        "train.early_stop_patience = 2\ndata.split_ratios = 0.6,0.2,0.2\n";
  std::string err;
  const auto prep = dir / "prep", run = dir / "run", ev = dir / "eval", rep = dir / "report";
  if (sfkit({"prepare", "-c", cfg.string(), "--listing", (dir / "raw" / "manifest.csv").string(), "-o", prep.string()},
            err) != 0) {
    return {false, "prepare failed: " + err};
  }
  if (sfkit({"train", "-c", (prep / "resolved_config.cfg").string(), "-o", run.string()}, err) != 0) {
    return {false, "train failed: " + err};
  }
  if (sfkit({"evaluate", "--checkpoint", (run / "best.ckpt").string(), "--manifest", (prep / "manifest.csv").string(),
             "--ensemble", "3x2", "-o", ev.string()},
            err) != 0) {
    return {false, "evaluate failed: " + err};
  }
  if (sfkit({"report", "--eval", ev.string(), "-o", rep.string()}, err) != 0) return {false, "report failed: " + err};

  const auto history = train::read_history(run / "history.jsonl");
  const auto preds = eval::read_predictions(ev / "predictions.jsonl");
  const bool six = !preds.empty() && std::all_of(preds.begin(), preds.end(), [](const eval::PredictionRecord& p) {
    return p.views_used == 6;
  });
  std::ifstream table(rep / "architectures.tsv");
  std::string header, row;
  std::getline(table, header);
  std::getline(table, row);
  const bool shaped = header.rfind("architecture\ttrain accuracy (%)\tvalidation accuracy (%)\ttest accuracy (%)", 0) == 0 &&
                      !row.empty();
  return {history.size() == 2 && six && shaped, std::to_string(history.size()) + " epochs, " +
                                                    std::to_string(preds.size()) + " test predictions" +
                                                    (six ? " with views_used = 6" : " with wrong view counts") +
                                                    ", report row: " + row};
}

}  // namespace

int main(int argc, char** argv) {
  set_log_level(LogLevel::kWarn);
  const std::string only = argc > 1 ? argv[1] : "";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"architecture shapes", architecture_shapes},
      {"preset consistency", preset_consistency},
      {"gradient check", gradient_check},
      {"synthetic overfit", synthetic_overfit},
      {"metric oracle", metric_oracle},
      {"ensemble", ensemble_suite},
      {"error-category table", category_table},
      {"splits", split_suite},
      {"chance floor", chance_floor},
      {"end-to-end smoke", end_to_end},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && name.find(only) == std::string::npos) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << fmt(secs, 1) << " s]"
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
