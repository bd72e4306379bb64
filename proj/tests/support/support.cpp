#include "support.hpp"

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sfk/model/layers.hpp"

namespace sfk::testing {
namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::uint64_t counter = 0;
  const auto stamp = mix_seed(static_cast<std::uint64_t>(std::hash<std::string>{}(tag)), ++counter,
                              static_cast<std::uint64_t>(::getpid()));
  path_ = fs::temp_directory_path() / ("sfk-" + tag + "-" + std::to_string(stamp % 1000000007ull));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

model::SlowFastConfig gradcheck_config() {
  return model::config_from_entries({{"name", "gradcheck"},
                                     {"clip_len", "8"},
                                     {"crop_size", "32"},
                                     {"scale_short_side", "32"},
                                     {"alpha", "2"},
                                     {"beta", "1/4"},
                                     {"slow.temporal_stride", "2"},
                                     {"slow.base_channels", "8"},
                                     {"backbone_depth", "1,1,1,1"},
                                     {"num_classes", "2"},
                                     {"fusion_temporal_kernel", "3"}});
}

model::SlowFastConfig micro_4x16(int num_classes) {
  return model::config_from_entries({{"preset", "4x16"},
                                     {"num_classes", std::to_string(num_classes)},
                                     {"crop_size", "32"},
                                     {"scale_short_side", "36"},
                                     {"slow.base_channels", "16"},
                                     {"backbone_depth", "1,1,1,1"}});
}

Tensor random_clips(const model::SlowFastConfig& c, int n, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t({n, 3, c.clip_len, c.crop_size, c.crop_size});
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
  return t;
}

void randomize_batchnorm(model::SlowFastNetwork& net, std::uint64_t seed) {
  Rng rng(seed);
  for (auto* p : net.parameters()) {
    const auto& n = p->name;
    const auto ends = [&](const std::string& s) { return n.size() >= s.size() && n.compare(n.size() - s.size(), s.size(), s) == 0; };
    if (ends(".gamma")) {
      for (std::int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = rng.uniform(0.5, 1.5);
    } else if (ends(".beta")) {
      for (std::int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = rng.uniform(-0.3, 0.3);
    } else if (ends(".running_mean")) {
      for (std::int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = rng.uniform(-0.2, 0.2);
    } else if (ends(".running_var")) {
      for (std::int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = rng.uniform(0.5, 2.0);
    } else if (n.rfind("lateral", 0) == 0 && ends(".weight")) {
      bool all_zero = true;
      for (std::int64_t i = 0; i < p->value.numel(); ++i) all_zero = all_zero && p->value[i] == 0;
      if (all_zero) {
        for (std::int64_t i = 0; i < p->value.numel(); ++i) p->value[i] = rng.normal(0, 0.1);
      }
    }
  }
}

GradCheckResult input_gradient_check(model::SlowFastNetwork& net, const Tensor& clips, int coordinates,
                                     std::uint64_t seed, double step) {
  net.set_dropout_rate(0.0);
  Rng rng(seed);
  const auto k = net.config().num_classes;
  const auto n = clips.dim(0);
  Tensor weights({n, k});
  for (std::int64_t i = 0; i < weights.numel(); ++i) weights[i] = rng.normal();
  const auto objective = [&](const Tensor& x) {
    // BN running statistics are irrelevant in training mode, but forward
    // updates them; snapshot and restore so every evaluation is identical.
    std::vector<Tensor> saved;
    for (auto* p : net.parameters()) saved.push_back(p->value);
    const Tensor logits = net.forward(x, true);
    net.release_cache();
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = saved[i];
    double s = 0;
    for (std::int64_t i = 0; i < logits.numel(); ++i) s += logits[i] * weights[i];
    return s;
  };

  std::vector<Tensor> saved;
  for (auto* p : net.parameters()) saved.push_back(p->value);
  net.zero_grad();
  net.forward(clips, true);
  const Tensor grad = net.backward(weights);
  net.release_cache();
  {
    auto params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = saved[i];
  }

  GradCheckResult r;
  r.slow_stem_grad_norm = std::sqrt(net.find_parameter("slow.stem.conv.weight")->grad.squared_norm());
  r.fast_stem_grad_norm = std::sqrt(net.find_parameter("fast.stem.conv.weight")->grad.squared_norm());
  for (int c = 0; c < coordinates; ++c) {
    const auto idx = static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(clips.numel())));
    Tensor plus = clips, minus = clips;
    plus[idx] += step;
    minus[idx] -= step;
    const double numeric = (objective(plus) - objective(minus)) / (2 * step);
    const double analytic = grad[idx];
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    r.worst_relative_error = std::max(r.worst_relative_error, std::abs(numeric - analytic) / denom);
    ++r.coordinates;
  }
  return r;
}

data::DatasetManifest thetis_shaped_manifest() {
  data::DatasetManifest m;
  m.classes = data::thetis_classes();
  for (int c = 0; c < 12; ++c) {
    for (int p = 1; p <= 55; ++p) {
      for (int s = 1; s <= 3; ++s) {
        data::VideoRecord r;
        r.id = "p" + std::to_string(p) + "_c" + std::to_string(c) + "_s" + std::to_string(s);
        r.path = "videos/" + r.id + ".avi";
        r.class_label = m.classes[static_cast<std::size_t>(c)];
        r.class_index = c;
        r.player_id = "p" + std::to_string(p);
        r.frame_count = 60 + (p * 7 + s * 13 + c) % 90;
        r.duration = r.frame_count / 30.0;
        m.records.push_back(r);
      }
    }
  }
  return m;
}

std::vector<eval::PredictionRecord> random_records(Rng& rng, int n, int classes) {
  std::vector<eval::PredictionRecord> out;
  for (int i = 0; i < n; ++i) {
    eval::PredictionRecord r;
    r.video_id = "v" + std::to_string(i);
    r.true_label = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(classes)));
    r.scores.resize(static_cast<std::size_t>(classes));
    for (auto& s : r.scores) s = rng.uniform();
    r.predicted_label = eval::argmax(r.scores);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<triage::ErrorCase> error_cases(int n) {
  std::vector<triage::ErrorCase> out;
  for (int i = 0; i < n; ++i) {
    triage::ErrorCase c;
    char id[16];
    std::snprintf(id, sizeof id, "e%02d", i);
    c.video_id = id;
    c.true_label = "flat service";
    c.predicted_label = "smash";
    c.scores = {0.3, 0.7};
    c.confidence = 0.7;
    out.push_back(c);
  }
  return out;
}

std::map<std::string, std::set<std::string>> category_fixture() {
  std::map<std::string, std::set<std::string>> out;
  const auto cases = error_cases(54);
  for (int i = 0; i < 54; ++i) {
    auto& set = out[cases[static_cast<std::size_t>(i)].video_id];
    if (i < 24) set.insert("serve confusion");
    else if (i < 35) set.insert("slice/volley confusion");
    else if (i < 44) set.insert("smash/serve confusion");
    else if (i < 52) set.insert("others");
    // Beginners overlaps with three serve confusions and covers the last two cases alone.
    if (i < 3 || i >= 52) set.insert("beginners");
  }
  return out;
}

}  // namespace sfk::testing
