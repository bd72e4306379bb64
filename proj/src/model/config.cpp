#include "sfk/model/config.hpp"

#include <cmath>
#include <numeric>
#include <set>

#include "sfk/error.hpp"

namespace sfk::model {

std::string to_string(FusionKind kind) { return kind == FusionKind::kConcatenate ? "concatenate" : "sum"; }

FusionKind parse_fusion_kind(const std::string& text) {
  if (text == "concatenate" || text == "concat") return FusionKind::kConcatenate;
  if (text == "sum") return FusionKind::kSum;
  throw ConfigError("fusion_kind must be 'concatenate' or 'sum', got '" + text + "'");
}

Ratio Ratio::parse(const std::string& text) {
  const auto t = kv::trim(text);
  Ratio r;
  if (auto slash = t.find('/'); slash != std::string::npos) {
    r.num = static_cast<int>(kv::parse_int("beta", t.substr(0, slash)));
    r.den = static_cast<int>(kv::parse_int("beta", t.substr(slash + 1)));
  } else {
    r.num = static_cast<int>(kv::parse_int("beta", t));
    r.den = 1;
  }
  if (r.den <= 0 || r.num <= 0) throw ConfigError("beta must be a positive fraction, got '" + text + "'");
  const int g = std::gcd(r.num, r.den);
  r.num /= g;
  r.den /= g;
  return r;
}

namespace {

std::string plan_string(const std::array<bool, kStageCount>& plan) {
  std::string out;
  for (std::size_t i = 0; i < plan.size(); ++i) out += (i ? "," : "") + std::string(plan[i] ? "1" : "0");
  return out;
}

std::array<bool, kStageCount> parse_plan(const std::string& key, const std::string& value) {
  const auto flags = kv::parse_int_list(key, value);
  if (flags.size() != kStageCount) {
    throw ConfigError("key '" + key + "': expected " + std::to_string(kStageCount) + " flags (stem,res2..res5)");
  }
  std::array<bool, kStageCount> out{};
  for (std::size_t i = 0; i < kStageCount; ++i) {
    if (flags[i] != 0 && flags[i] != 1) throw ConfigError("key '" + key + "': flags must be 0 or 1");
    out[i] = flags[i] == 1;
  }
  return out;
}

template <std::size_t N>
std::array<double, N> parse_triplet(const std::string& key, const std::string& value) {
  const auto v = kv::parse_real_list(key, value);
  if (v.size() != N) throw ConfigError("key '" + key + "': expected " + std::to_string(N) + " values");
  std::array<double, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

std::string triplet_string(const std::array<double, 3>& v) {
  return kv::format_real(v[0]) + "," + kv::format_real(v[1]) + "," + kv::format_real(v[2]);
}

}  // namespace

void SlowFastConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("invalid model config: " + m); };
  if (clip_len < 1) fail("clip_len must be positive");
  if (crop_size < 32) fail("crop_size must be at least 32 for the five-fold spatial downsampling plan");
  if (scale_short_side < crop_size) fail("scale_short_side must be >= crop_size");
  if (alpha < 1) fail("alpha must be >= 1");
  if (beta.num <= 0 || beta.den <= 0 || beta.num > beta.den) fail("beta must lie in (0, 1]");
  if (slow.temporal_stride < 1 || fast.temporal_stride < 1) fail("temporal strides must be >= 1");
  if (slow.base_channels < 1 || fast.base_channels < 1) fail("base_channels must be >= 1");
  if (fast.temporal_stride * alpha != slow.temporal_stride) {
    fail("fast.temporal_stride (" + std::to_string(fast.temporal_stride) + ") x alpha (" + std::to_string(alpha) +
         ") must equal slow.temporal_stride (" + std::to_string(slow.temporal_stride) + ")");
  }
  if (clip_len % slow.temporal_stride != 0) {
    fail("clip_len " + std::to_string(clip_len) + " is not divisible by slow.temporal_stride " +
         std::to_string(slow.temporal_stride));
  }
  if ((slow.base_channels * beta.num) % beta.den != 0) {
    fail("beta " + beta.to_string() + " x slow.base_channels " + std::to_string(slow.base_channels) +
         " is not an integer channel count");
  }
  if (fast.base_channels != slow.base_channels * beta.num / beta.den) {
    fail("fast.base_channels must equal beta x slow.base_channels = " +
         std::to_string(slow.base_channels * beta.num / beta.den));
  }
  for (int d : backbone_depth) {
    if (d < 1) fail("every backbone stage needs at least one block");
  }
  if (num_classes < 1) fail("num_classes must be >= 1");
  if (fusion_temporal_kernel < 1 || fusion_temporal_kernel % 2 == 0) fail("fusion_temporal_kernel must be a positive odd integer");
  for (double s : norm_std) {
    if (!(s > 0)) fail("norm_std entries must be positive");
  }
}

std::array<StageChannels, kStageCount> SlowFastConfig::channel_plan() const {
  std::array<StageChannels, kStageCount> plan{};
  const int cs = slow.base_channels;
  const int cf = fast.base_channels;
  // Stem.
  plan[0].slow_in = 3;
  plan[0].fast_in = 3;
  plan[0].slow_out = cs;
  plan[0].fast_out = cf;
  for (std::size_t s = 1; s < kStageCount; ++s) {
    const int mult = 1 << (s - 1);
    plan[s].fast_in = plan[s - 1].fast_out;
    plan[s].slow_inner = cs * mult;
    plan[s].slow_out = 4 * cs * mult;
    plan[s].fast_inner = cf * mult;
    plan[s].fast_out = 4 * cf * mult;
  }
  for (std::size_t s = 0; s < kStageCount; ++s) {
    if (s > 0) plan[s].slow_in = plan[s - 1].fused_slow;
    const bool fuses = s + 1 < kStageCount;
    if (fuses) {
      if (fusion_kind == FusionKind::kConcatenate) {
        plan[s].lateral_out = 2 * plan[s].fast_out;
        plan[s].fused_slow = plan[s].slow_out + plan[s].lateral_out;
      } else {
        plan[s].lateral_out = plan[s].slow_out;
        plan[s].fused_slow = plan[s].slow_out;
      }
    } else {
      plan[s].fused_slow = plan[s].slow_out;
    }
  }
  return plan;
}

int SlowFastConfig::head_features() const {
  const auto plan = channel_plan();
  return plan[kStageCount - 1].slow_out + plan[kStageCount - 1].fast_out;
}

void SlowFastConfig::set_width(int slow_base_channels) {
  slow.base_channels = slow_base_channels;
  fast.base_channels = slow_base_channels * beta.num / beta.den;
}

KeyValueDoc SlowFastConfig::to_kv() const {
  KeyValueDoc doc;
  doc.set("name", name);
  doc.set("clip_len", std::to_string(clip_len));
  doc.set("crop_size", std::to_string(crop_size));
  doc.set("scale_short_side", std::to_string(scale_short_side));
  doc.set("alpha", std::to_string(alpha));
  doc.set("beta", beta.to_string());
  doc.set("slow.temporal_stride", std::to_string(slow.temporal_stride));
  doc.set("slow.base_channels", std::to_string(slow.base_channels));
  doc.set("slow.temporal_kernel_plan", plan_string(slow.temporal_kernel_plan));
  doc.set("fast.temporal_stride", std::to_string(fast.temporal_stride));
  doc.set("fast.base_channels", std::to_string(fast.base_channels));
  doc.set("fast.temporal_kernel_plan", plan_string(fast.temporal_kernel_plan));
  doc.set("backbone_depth", std::to_string(backbone_depth[0]) + "," + std::to_string(backbone_depth[1]) + "," +
                                std::to_string(backbone_depth[2]) + "," + std::to_string(backbone_depth[3]));
  doc.set("num_classes", std::to_string(num_classes));
  doc.set("fusion_kind", to_string(fusion_kind));
  doc.set("fusion_temporal_kernel", std::to_string(fusion_temporal_kernel));
  doc.set("norm_mean", triplet_string(norm_mean));
  doc.set("norm_std", triplet_string(norm_std));
  return doc;
}

SlowFastConfig config_from_entries(const std::vector<std::pair<std::string, std::string>>& entries) {
  SlowFastConfig cfg;
  std::map<std::string, std::string> values;
  for (const auto& [k, v] : entries) values[k] = v;

  int num_classes = cfg.num_classes;
  if (auto it = values.find("num_classes"); it != values.end()) {
    num_classes = static_cast<int>(kv::parse_int("num_classes", it->second));
  }
  if (auto it = values.find("preset"); it != values.end()) {
    cfg = preset(it->second, num_classes);
  }

  bool fast_stride_given = false;
  bool fast_width_given = false;
  for (const auto& [key, value] : entries) {
    if (key == "preset") continue;
    if (key == "name") {
      cfg.name = value;
    } else if (key == "clip_len") {
      cfg.clip_len = static_cast<int>(kv::parse_int(key, value));
    } else if (key == "crop_size") {
      cfg.crop_size = static_cast<int>(kv::parse_int(key, value));
    } else if (key == "scale_short_side") {
      cfg.scale_short_side = static_cast<int>(kv::parse_int(key, value));
    } else if (key == "alpha") {
      cfg.alpha = static_cast<int>(kv::parse_int(key, value));
    } else if (key == "beta") {
      cfg.beta = Ratio::parse(value);
    } else if (key == "slow.temporal_stride") {
      cfg.slow.temporal_stride = static_cast<int>(kv::parse_int(key, value));
    } else if (key == "slow.base_channels") {
      cfg.slow.base_channels = static_cast<int>(kv::parse_int(key, value));
    } else if (key == "slow.temporal_kernel_plan") {
      cfg.slow.temporal_kernel_plan = parse_plan(key, value);
    } else if (key == "fast.temporal_stride") {
      cfg.fast.temporal_stride = static_cast<int>(kv::parse_int(key, value));
      fast_stride_given = true;
    } else if (key == "fast.base_channels") {
      cfg.fast.base_channels = static_cast<int>(kv::parse_int(key, value));
      fast_width_given = true;
    } else if (key == "fast.temporal_kernel_plan") {
      cfg.fast.temporal_kernel_plan = parse_plan(key, value);
    } else if (key == "backbone_depth") {
      const auto d = kv::parse_int_list(key, value);
      if (d.size() != kResidualStageCount) throw ConfigError("backbone_depth needs 4 block counts");
      for (std::size_t i = 0; i < kResidualStageCount; ++i) cfg.backbone_depth[i] = static_cast<int>(d[i]);
    } else if (key == "num_classes") {
      cfg.num_classes = num_classes;
    } else if (key == "fusion_kind") {
      cfg.fusion_kind = parse_fusion_kind(value);
    } else if (key == "fusion_temporal_kernel") {
      cfg.fusion_temporal_kernel = static_cast<int>(kv::parse_int(key, value));
    } else if (key == "norm_mean") {
      cfg.norm_mean = parse_triplet<3>(key, value);
    } else if (key == "norm_std") {
      cfg.norm_std = parse_triplet<3>(key, value);
    } else {
      throw ConfigError("unknown model config key '" + key + "'");
    }
  }
  if (!fast_stride_given) {
    if (cfg.alpha < 1 || cfg.slow.temporal_stride % cfg.alpha != 0) {
      throw ConfigError("slow.temporal_stride " + std::to_string(cfg.slow.temporal_stride) +
                        " is not divisible by alpha " + std::to_string(cfg.alpha));
    }
    cfg.fast.temporal_stride = cfg.slow.temporal_stride / cfg.alpha;
  }
  if (!fast_width_given) {
    if ((cfg.slow.base_channels * cfg.beta.num) % cfg.beta.den != 0) {
      throw ConfigError("beta " + cfg.beta.to_string() + " x slow.base_channels " +
                        std::to_string(cfg.slow.base_channels) + " is not an integer channel count");
    }
    cfg.fast.base_channels = cfg.slow.base_channels * cfg.beta.num / cfg.beta.den;
  }
  cfg.validate();
  return cfg;
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"2x32", "4x16", "8x8"};
  return names;
}

SlowFastConfig preset(std::string_view name, int num_classes) {
  int slow_stride = 0;
  if (name == "2x32") {
    slow_stride = 32;
  } else if (name == "4x16") {
    slow_stride = 16;
  } else if (name == "8x8") {
    slow_stride = 8;
  } else if (name == "8x16") {
    throw ConfigError("preset '8x16' is not supported: an 8-frame slow pathway on a 64-frame clip has stride 8; use '8x8'");
  } else {
    throw ConfigError("unknown architecture preset '" + std::string(name) + "' (expected 2x32, 4x16 or 8x8)");
  }
  SlowFastConfig cfg;
  cfg.name = std::string(name);
  cfg.num_classes = num_classes;
  cfg.slow.temporal_stride = slow_stride;
  cfg.fast.temporal_stride = slow_stride / cfg.alpha;
  cfg.validate();
  return cfg;
}

}  // namespace sfk::model
