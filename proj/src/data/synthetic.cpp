#include "sfk/data/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "sfk/error.hpp"
#include "sfk/rng.hpp"

namespace sfk::data {

VideoFrames make_motion_video(const MotionVideoSpec& s) {
  if (s.direction != 1 && s.direction != -1) throw InvalidArgument("direction must be +1 or -1", "direction");
  Rng rng(s.seed);
  VideoFrames v;
  v.width = s.width;
  v.height = s.height;
  v.fps = s.fps;
  const double span = s.width - 2.0 * s.radius;
  const double cy = s.radius + rng.uniform() * (s.height - 2.0 * s.radius);
  const double phase = rng.uniform(0.0, 0.25);
  for (int t = 0; t < s.frames; ++t) {
    // Sweep the full width once over the video, starting at a random phase.
    double u = phase + static_cast<double>(t) / s.frames * 0.75;
    if (s.direction < 0) u = 1.0 - u;
    const double cx = s.radius + u * span;
    std::vector<std::uint8_t> f(static_cast<std::size_t>(s.width) * s.height * 3);
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        const double d = std::hypot(x - cx, y - cy);
        const double base = d <= s.radius ? 220.0 : 40.0;
        for (int c = 0; c < 3; ++c) {
          const double val = base + (rng.uniform() * 2 - 1) * s.noise;
          f[(static_cast<std::size_t>(y) * s.width + x) * 3 + c] = static_cast<std::uint8_t>(std::clamp(val, 0.0, 255.0));
        }
      }
    }
    v.frames.push_back(std::move(f));
  }
  return v;
}

VideoFrames make_noise_video(int width, int height, int frames, std::uint64_t seed) {
  Rng rng(seed);
  VideoFrames v;
  v.width = width;
  v.height = height;
  v.fps = 25.0;
  for (int t = 0; t < frames; ++t) {
    std::vector<std::uint8_t> f(static_cast<std::size_t>(width) * height * 3);
    for (auto& b : f) b = static_cast<std::uint8_t>(rng.uniform_index(256));
    v.frames.push_back(std::move(f));
  }
  return v;
}

DatasetManifest write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticDatasetSpec& spec) {
  if (spec.classes.empty()) throw InvalidArgument("synthetic dataset needs classes", "classes");
  if (spec.kind == "motion" && spec.classes.size() != 2) {
    throw InvalidArgument("motion dataset has exactly two classes (left, right)", "classes");
  }
  if (spec.kind != "motion" && spec.kind != "noise") throw InvalidArgument("kind must be motion or noise", "kind");
  std::filesystem::create_directories(dir / "videos");
  DatasetManifest m;
  m.classes = spec.classes;
  m.source_note = "synthetic " + spec.kind + " dataset";
  m.base_dir = dir;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    for (int i = 0; i < spec.per_class; ++i) {
      const std::uint64_t seed = mix_seed(spec.seed, c, static_cast<std::uint64_t>(i));
      VideoFrames v;
      if (spec.kind == "motion") {
        MotionVideoSpec ms;
        ms.width = spec.width;
        ms.height = spec.height;
        ms.frames = spec.frames;
        ms.direction = c == 0 ? -1 : 1;
        ms.seed = seed;
        v = make_motion_video(ms);
      } else {
        v = make_noise_video(spec.width, spec.height, spec.frames, seed);
      }
      VideoRecord r;
      r.id = "p" + std::to_string(i + 1) + "_c" + std::to_string(c) + "_" + std::to_string(i);
      r.path = "videos/" + r.id + ".avi";
      r.class_label = spec.classes[c];
      r.class_index = static_cast<int>(c);
      r.player_id = "p" + std::to_string(i + 1);
      if (spec.probed) {
        r.frame_count = v.frame_count();
        r.duration = v.frame_count() / v.fps;
      }
      write_video(dir / r.path, v);
      m.records.push_back(std::move(r));
    }
  }
  write_manifest(m, dir / "manifest.csv");
  return m;
}

}  // namespace sfk::data
