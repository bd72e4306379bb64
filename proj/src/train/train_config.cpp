#include "sfk/train/train_config.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sfk/error.hpp"

namespace sfk::train {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgdMomentum ? "sgd-momentum" : "adam"; }

std::string to_string(LrSchedule schedule) { return schedule == LrSchedule::kCosine ? "cosine" : "constant"; }

void TrainConfig::validate() const {
  if (epochs_max < 1) throw ConfigError("epochs_max must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (lr_min < 0 || lr_min > learning_rate) throw ConfigError("lr_min must lie in [0, learning_rate]");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must lie in [0, 1)");
  if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (weight_decay < 0) throw ConfigError("weight_decay must be nonnegative");
  if (dropout_rate < 0 || dropout_rate >= 1) throw ConfigError("dropout_rate must lie in [0, 1)");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be at least 1");
  if (early_stop_patience > epochs_max) throw ConfigError("early_stop_patience must not exceed epochs_max");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be nonnegative (0 disables)");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (augmentation.flip_prob < 0 || augmentation.flip_prob > 1) throw ConfigError("flip_prob must lie in [0, 1]");
}

double TrainConfig::lr_at(int epoch) const {
  if (schedule == LrSchedule::kConstant || epochs_max == 1) return learning_rate;
  const double progress = static_cast<double>(std::clamp(epoch, 1, epochs_max) - 1) / (epochs_max - 1);
  return lr_min + 0.5 * (learning_rate - lr_min) * (1 + std::cos(std::numbers::pi * progress));
}

KeyValueDoc TrainConfig::to_kv() const {
  KeyValueDoc d;
  d.set("epochs_max", std::to_string(epochs_max));
  d.set("batch_size", std::to_string(batch_size));
  d.set("optimizer", to_string(optimizer));
  d.set("learning_rate", kv::format_real(learning_rate));
  d.set("schedule", to_string(schedule));
  d.set("lr_min", kv::format_real(lr_min));
  d.set("momentum", kv::format_real(momentum));
  d.set("adam_beta1", kv::format_real(adam_beta1));
  d.set("adam_beta2", kv::format_real(adam_beta2));
  d.set("weight_decay", kv::format_real(weight_decay));
  d.set("dropout_rate", kv::format_real(dropout_rate));
  d.set("early_stop_patience", std::to_string(early_stop_patience));
  d.set("seed", std::to_string(seed));
  d.set("checkpoint_every", std::to_string(checkpoint_every));
  d.set("workers", std::to_string(workers));
  d.set("augment.flip_prob", kv::format_real(augmentation.flip_prob));
  d.set("augment.random_crop", augmentation.random_crop ? "true" : "false");
  d.set("augment.temporal_jitter", augmentation.temporal_jitter ? "true" : "false");
  return d;
}

TrainConfig train_config_from_entries(const std::vector<std::pair<std::string, std::string>>& entries) {
  TrainConfig c;
  for (const auto& [key, value] : entries) {
    const auto as_int = [&] { return static_cast<int>(kv::parse_int(key, value)); };
    if (key == "epochs_max") {
      c.epochs_max = as_int();
    } else if (key == "batch_size") {
      c.batch_size = as_int();
    } else if (key == "optimizer") {
      if (value == "sgd-momentum" || value == "sgd") {
        c.optimizer = OptimizerKind::kSgdMomentum;
      } else if (value == "adam" || value == "adaptive") {
        c.optimizer = OptimizerKind::kAdam;
      } else {
        throw ConfigError("optimizer must be sgd-momentum or adam, got '" + value + "'");
      }
    } else if (key == "learning_rate") {
      c.learning_rate = kv::parse_real(key, value);
    } else if (key == "schedule") {
      if (value == "cosine") {
        c.schedule = LrSchedule::kCosine;
      } else if (value == "constant") {
        c.schedule = LrSchedule::kConstant;
      } else {
        throw ConfigError("schedule must be cosine or constant, got '" + value + "'");
      }
    } else if (key == "lr_min") {
      c.lr_min = kv::parse_real(key, value);
    } else if (key == "momentum") {
      c.momentum = kv::parse_real(key, value);
    } else if (key == "adam_beta1") {
      c.adam_beta1 = kv::parse_real(key, value);
    } else if (key == "adam_beta2") {
      c.adam_beta2 = kv::parse_real(key, value);
    } else if (key == "weight_decay") {
      c.weight_decay = kv::parse_real(key, value);
    } else if (key == "dropout_rate") {
      c.dropout_rate = kv::parse_real(key, value);
    } else if (key == "early_stop_patience") {
      c.early_stop_patience = as_int();
    } else if (key == "seed") {
      const long s = kv::parse_int(key, value);
      if (s < 0) throw ConfigError("seed must be nonnegative");
      c.seed = static_cast<std::uint64_t>(s);
    } else if (key == "checkpoint_every") {
      c.checkpoint_every = as_int();
    } else if (key == "workers") {
      c.workers = as_int();
    } else if (key == "augment.flip_prob") {
      c.augmentation.flip_prob = kv::parse_real(key, value);
    } else if (key == "augment.random_crop") {
      c.augmentation.random_crop = kv::parse_bool(key, value);
    } else if (key == "augment.temporal_jitter") {
      c.augmentation.temporal_jitter = kv::parse_bool(key, value);
    } else {
      throw ConfigError("unknown train config key '" + key + "'");
    }
  }
  return c;
}

}  // namespace sfk::train
