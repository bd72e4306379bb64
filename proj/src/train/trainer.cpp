#include "sfk/train/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "sfk/error.hpp"
#include "sfk/log.hpp"
#include "sfk/model/checkpoint.hpp"
#include "sfk/parallel.hpp"
#include "sfk/train/optimizer.hpp"

namespace sfk::train {
namespace fs = std::filesystem;
using nlohmann::json;

StopDecision early_stop_check(const std::vector<double>& val_errors, int patience) {
  if (val_errors.empty()) throw InvalidArgument("early stopping needs a nonempty history", "history");
  if (patience < 1) throw InvalidArgument("patience must be at least 1", "patience");
  const int best = best_epoch_of(val_errors);
  const int since = static_cast<int>(val_errors.size()) - best;
  return since >= patience ? StopDecision::kStop : StopDecision::kContinue;
}

int best_epoch_of(const std::vector<double>& val_errors) {
  if (val_errors.empty()) throw InvalidArgument("empty history", "history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < val_errors.size(); ++i) {
    if (val_errors[i] < val_errors[best]) best = i;
  }
  return static_cast<int>(best) + 1;
}

namespace {

int argmax(const Real* v, std::int64_t n) {
  std::int64_t best = 0;
  for (std::int64_t i = 1; i < n; ++i) {
    if (v[i] > v[best]) best = i;
  }
  return static_cast<int>(best);
}

}  // namespace

ValidationResult validate(const model::SlowFastNetwork& network, data::VideoSource& source,
                          const std::vector<const data::VideoRecord*>& records, std::uint64_t seed, int workers) {
  if (records.empty()) throw DataError("validation set is empty");
  const auto geometry = data::ClipGeometry::from(network.config());
  struct Outcome {
    bool skipped = false;
    std::string reason;
    int predicted = -1;
  };
  const auto outcomes = parallel_map(records.size(), workers, [&](std::size_t i) {
    Outcome o;
    Rng rng(mix_seed(seed, i));
    model::ClipTensor clip;
    try {
      clip = data::preprocess_clip(source, *records[i], data::SampleMode::kRandomClip, geometry, {}, rng);
    } catch (const DataError& e) {
      o.skipped = true;
      o.reason = e.what();
      return o;
    }
    const auto scores = network.predict(clip, false).scores;
    o.predicted = argmax(scores.data(), static_cast<std::int64_t>(scores.size()));
    return o;
  });

  ValidationResult r;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (outcomes[i].skipped) {
      r.skipped.push_back(records[i]->id);
      log_warn("validation skipped undecodable video: " + outcomes[i].reason);
      continue;
    }
    r.predicted.push_back(outcomes[i].predicted);
    ++r.total;
    if (outcomes[i].predicted == records[i]->class_index) ++r.correct;
  }
  if (r.total == 0) throw DataError("no validation video could be decoded");
  if (!r.skipped.empty()) {
    log_warn(std::to_string(r.skipped.size()) + " of " + std::to_string(records.size()) +
             " validation videos excluded from the denominator");
  }
  r.accuracy = 100.0 * r.correct / r.total;
  return r;
}

std::string history_line(const EpochRecord& e) {
  json j;
  j["epoch"] = e.epoch;
  j["train_err"] = e.train_error;
  j["val_err"] = e.val_error;
  j["lr"] = e.learning_rate;
  j["seconds"] = e.seconds;
  j["loss"] = e.loss;
  j["val_seed"] = e.val_seed;
  j["val_skipped"] = e.val_skipped;
  return j.dump();
}

std::vector<EpochRecord> read_history(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open history file " + path.string());
  std::vector<EpochRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      EpochRecord e;
      e.epoch = j.at("epoch").get<int>();
      e.train_error = j.at("train_err").get<double>();
      e.val_error = j.at("val_err").get<double>();
      e.learning_rate = j.at("lr").get<double>();
      e.seconds = j.at("seconds").get<double>();
      e.loss = j.value("loss", 0.0);
      e.val_seed = j.value("val_seed", std::uint64_t{0});
      e.val_skipped = j.value("val_skipped", 0);
      out.push_back(e);
    } catch (const json::exception& ex) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

std::uint64_t validation_seed(std::uint64_t train_seed, int epoch) {
  return mix_seed(train_seed, 0x7661ull, static_cast<std::uint64_t>(epoch));
}

TrainingRun train(const model::SlowFastConfig& model_config, const data::DatasetManifest& manifest,
                  const data::SplitSpec& splits, const TrainConfig& config, const TrainOptions& options) {
  config.validate();
  model_config.validate();
  if (static_cast<int>(manifest.classes.size()) != model_config.num_classes) {
    throw ConfigError("model has " + std::to_string(model_config.num_classes) + " classes but the manifest has " +
                      std::to_string(manifest.classes.size()));
  }
  std::vector<const data::VideoRecord*> train_set, val_set;
  for (const auto& r : manifest.records) {
    const auto s = splits.of(r.id);
    if (s == data::Split::kTrain) train_set.push_back(&r);
    if (s == data::Split::kVal) val_set.push_back(&r);
  }
  if (train_set.empty()) throw DataError("train split is empty");
  if (val_set.empty()) throw DataError("val split is empty");
  if (options.output_dir.empty()) throw ConfigError("training needs an output directory");
  fs::create_directories(options.output_dir);

  data::VideoSource source(manifest, {options.cache_dir, options.memory_budget_bytes});
  auto network = model::build_slowfast(model_config, mix_seed(config.seed, 0x696eull));
  network->set_dropout_rate(config.dropout_rate);
  network->reseed_dropout(mix_seed(config.seed, 0x6470ull));
  auto optimizer = make_optimizer(config);
  const auto params = network->parameters();
  const auto geometry = data::ClipGeometry::from(model_config);

  const fs::path history_path = options.output_dir / "history.jsonl";
  std::ofstream history_out(history_path, std::ios::trunc);
  if (!history_out) throw DataError("cannot write " + history_path.string());

  TrainingRun run;
  std::vector<double> val_errors;
  const auto save = [&](const fs::path& path, const EpochRecord& e) {
    model::CheckpointMeta meta;
    meta.epoch = e.epoch;
    meta.train_error = e.train_error;
    meta.val_error = e.val_error;
    meta.val_seed = e.val_seed;
    meta.train_config = config.to_kv();
    model::save_checkpoint(path, *network, meta);
  };

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 1; epoch <= config.epochs_max; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = config.lr_at(epoch);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::uint64_t epoch_seed = mix_seed(config.seed, 0x6570ull, static_cast<std::uint64_t>(epoch));
    Rng order_rng(epoch_seed);
    order_rng.shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    int wrong = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t n = std::min(order.size() - start, static_cast<std::size_t>(config.batch_size));
      auto clips = parallel_map(n, config.workers, [&](std::size_t k) {
        const std::size_t pos = start + k;
        Rng rng(mix_seed(epoch_seed, pos));
        return data::preprocess_clip(source, *train_set[order[pos]], data::SampleMode::kTrain, geometry,
                                     config.augmentation, rng);
      });
      std::vector<int> labels(n);
      for (std::size_t k = 0; k < n; ++k) labels[k] = train_set[order[start + k]]->class_index;

      network->zero_grad();
      const Tensor logits = network->forward(model::stack_clips(clips), true);
      const auto loss = model::softmax_cross_entropy(logits, labels);
      if (!std::isfinite(loss.loss)) {
        network->release_cache();
        history_out.flush();
        throw RuntimeError("training diverged at epoch " + std::to_string(epoch) +
                           ": loss is not finite; checkpoints up to epoch " + std::to_string(epoch - 1) +
                           " are kept in " + options.output_dir.string());
      }
      network->backward(loss.grad);
      network->release_cache();
      optimizer->step(params, lr);
      loss_sum += loss.loss * static_cast<double>(n);
      const auto k_classes = logits.dim(1);
      for (std::size_t k = 0; k < n; ++k) {
        if (argmax(logits.data() + static_cast<std::int64_t>(k) * k_classes, k_classes) != labels[k]) ++wrong;
      }
    }
    for (const auto* p : params) {
      for (std::int64_t j = 0; j < p->value.numel(); ++j) {
        if (!std::isfinite(p->value[j])) {
          throw RuntimeError("training diverged at epoch " + std::to_string(epoch) + ": parameter " + p->name +
                             " is not finite");
        }
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    rec.loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_error = 100.0 * wrong / static_cast<double>(train_set.size());
    rec.val_seed = validation_seed(config.seed, epoch);
    const auto val = validate(*network, source, val_set, rec.val_seed, config.workers);
    rec.val_error = 100.0 - val.accuracy;
    rec.val_skipped = static_cast<int>(val.skipped.size());
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    run.history.push_back(rec);
    val_errors.push_back(rec.val_error);
    history_out << history_line(rec) << '\n';
    history_out.flush();

    if (best_epoch_of(val_errors) == epoch) {
      save(options.output_dir / "best.ckpt", rec);
      run.best_epoch = epoch;
      run.best_val_error = rec.val_error;
    }
    save(options.output_dir / "last.ckpt", rec);
    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04d.ckpt", epoch);
      save(options.output_dir / name, rec);
      run.checkpoints.push_back(options.output_dir / name);
    }
    log_info("epoch " + std::to_string(epoch) + ": loss " + kv::format_real(rec.loss) + ", train err " +
             kv::format_real(rec.train_error) + "%, val err " + kv::format_real(rec.val_error) + "%");

    if (options.on_epoch && !options.on_epoch(rec, *network)) break;
    if (epoch < config.epochs_max && early_stop_check(val_errors, config.early_stop_patience) == StopDecision::kStop) {
      run.stopped_early = true;
      break;
    }
  }
  run.checkpoints.insert(run.checkpoints.begin(), options.output_dir / "best.ckpt");
  run.checkpoints.push_back(options.output_dir / "last.ckpt");
  return run;
}

}  // namespace sfk::train
