#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sfk/data/manifest.hpp"
#include "sfk/data/video.hpp"

namespace sfk::data {

/// A bright disc sweeping horizontally across a noisy dark background.
struct MotionVideoSpec {
  int width = 48;
  int height = 48;
  int frames = 64;
  double fps = 25.0;
  int radius = 6;
  /// +1 moves right, -1 moves left.
  int direction = 1;
  double noise = 8.0;
  std::uint64_t seed = 0;
};

VideoFrames make_motion_video(const MotionVideoSpec& spec);

/// Uniform noise frames; carries no class information.
VideoFrames make_noise_video(int width, int height, int frames, std::uint64_t seed);

struct SyntheticDatasetSpec {
  std::vector<std::string> classes;
  int per_class = 4;
  int width = 48;
  int height = 48;
  int frames = 64;
  std::uint64_t seed = 0;
  /// "motion" needs exactly the two classes (left, right); "noise" takes any.
  std::string kind = "motion";
  /// Fill frames/duration in the manifest; otherwise leave them for `prepare`.
  bool probed = true;
};

/// Writes lossless videos plus `manifest.csv` (no splits) under `dir`.
DatasetManifest write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticDatasetSpec& spec);

}  // namespace sfk::data
