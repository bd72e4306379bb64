#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sfk/keyvalue.hpp"

namespace sfk::model {

enum class FusionKind { kConcatenate, kSum };

std::string to_string(FusionKind kind);
FusionKind parse_fusion_kind(const std::string& text);

/// Exact fraction, used for the fast/slow channel ratio.
struct Ratio {
  int num = 1;
  int den = 8;
  double value() const { return static_cast<double>(num) / den; }
  std::string to_string() const { return std::to_string(num) + "/" + std::to_string(den); }
  static Ratio parse(const std::string& text);
  bool operator==(const Ratio&) const = default;
};

/// Stem followed by res2..res5.
inline constexpr std::size_t kStageCount = 5;
inline constexpr std::size_t kResidualStageCount = 4;

struct PathwayConfig {
  int temporal_stride = 1;
  /// Output channels of the stem; residual stage i has inner width base * 2^i and output width 4 * base * 2^i.
  int base_channels = 1;
  /// Whether the stem (index 0) and each residual stage use a temporal kernel extent > 1.
  std::array<bool, kStageCount> temporal_kernel_plan{};
  bool operator==(const PathwayConfig&) const = default;
};

/// Channel widths of one stage for both pathways.
struct StageChannels {
  int slow_in = 0;
  int slow_inner = 0;
  int slow_out = 0;
  int fast_in = 0;
  int fast_inner = 0;
  int fast_out = 0;
  /// Output width of the lateral transform that follows this stage (0 when no fusion follows).
  int lateral_out = 0;
  /// Slow channel count after fusion.
  int fused_slow = 0;
};

struct SlowFastConfig {
  std::string name = "4x16";
  int clip_len = 64;
  int crop_size = 224;
  int scale_short_side = 256;
  int alpha = 8;
  Ratio beta{1, 8};
  PathwayConfig slow{16, 64, {false, false, false, true, true}};
  PathwayConfig fast{2, 8, {true, true, true, true, true}};
  std::array<int, kResidualStageCount> backbone_depth{3, 4, 6, 3};
  int num_classes = 12;
  FusionKind fusion_kind = FusionKind::kConcatenate;
  int fusion_temporal_kernel = 5;
  std::array<double, 3> norm_mean{0.45, 0.45, 0.45};
  std::array<double, 3> norm_std{0.225, 0.225, 0.225};

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;

  int slow_frames() const { return clip_len / slow.temporal_stride; }
  int fast_frames() const { return clip_len / fast.temporal_stride; }

  /// Widths for stem (index 0) and res2..res5 (indices 1..4).
  std::array<StageChannels, kStageCount> channel_plan() const;
  int head_features() const;

  /// Sets the slow stem width and derives the fast one through beta.
  void set_width(int slow_base_channels);

  /// Key-value form; keys carry no prefix.
  KeyValueDoc to_kv() const;
  bool operator==(const SlowFastConfig&) const = default;
};

/// Builds a config from key/value pairs. A `preset` key seeds the defaults;
/// fast stride and fast width are derived from alpha and beta unless given.
/// Unknown keys are rejected.
SlowFastConfig config_from_entries(const std::vector<std::pair<std::string, std::string>>& entries);

/// Named architectures "2x32", "4x16" and "8x8": slow frames x slow stride on a 64-frame clip.
SlowFastConfig preset(std::string_view name, int num_classes = 12);
const std::vector<std::string>& preset_names();

}  // namespace sfk::model
