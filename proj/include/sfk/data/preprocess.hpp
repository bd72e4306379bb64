#pragma once

#include <array>
#include <utility>
#include <vector>

#include "sfk/data/video.hpp"
#include "sfk/model/config.hpp"
#include "sfk/model/slowfast.hpp"
#include "sfk/rng.hpp"

namespace sfk::data {

struct ClipGeometry {
  int clip_len = 64;
  int crop_size = 224;
  int scale_short_side = 256;
  std::array<double, 3> mean{0.45, 0.45, 0.45};
  std::array<double, 3> std{0.225, 0.225, 0.225};

  static ClipGeometry from(const model::SlowFastConfig& config);
};

/// Train-mode augmentation.
struct Augmentation {
  double flip_prob = 0.5;
  bool random_crop = true;
  bool temporal_jitter = true;
  bool operator==(const Augmentation&) const = default;
};

enum class SampleMode {
  kTrain,       ///< augmentation as configured
  kEval,        ///< centered window, center crop
  kRandomClip,  ///< random window and crop, no flip (single-clip validation)
};

struct ClipPlacement {
  int temporal_start = 0;
  int crop_x = 0;
  int crop_y = 0;
  bool flip = false;
  bool operator==(const ClipPlacement&) const = default;
};

/// Size after scaling the shorter side to `short_side`, preserving aspect ratio (rounded).
std::pair<int, int> scaled_size(int width, int height, int short_side);

/// Start of a clip_len window centered at `center_fraction` of the video, clamped into the video.
int window_start(int frame_count, int clip_len, double center_fraction);

ClipPlacement draw_placement(const VideoFrames& video, SampleMode mode, const ClipGeometry& geometry,
                             const Augmentation& augmentation, Rng& rng);

/// Scales, crops, normalizes and temporally clips. Videos shorter than
/// clip_len are looped from the start of the window.
model::ClipTensor render_clip(const VideoFrames& video, const ClipPlacement& placement, const ClipGeometry& geometry);

model::ClipTensor preprocess_clip(const VideoFrames& video, SampleMode mode, const ClipGeometry& geometry,
                                  const Augmentation& augmentation, Rng& rng);
model::ClipTensor preprocess_clip(VideoSource& source, const VideoRecord& record, SampleMode mode,
                                  const ClipGeometry& geometry, const Augmentation& augmentation, Rng& rng);

/// The six test views: temporal windows centered at 1/3 and 2/3 of the video,
/// each with three crops along the longer side (left/center/right for
/// landscape, top/center/bottom for portrait). Window-major order.
std::vector<ClipPlacement> test_view_placements(const VideoFrames& video, const ClipGeometry& geometry);
std::vector<model::ClipTensor> enumerate_test_views(VideoSource& source, const VideoRecord& record,
                                                    const ClipGeometry& geometry);

}  // namespace sfk::data
