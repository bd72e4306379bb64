#include "sfk/data/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "sfk/error.hpp"

namespace sfk::data {

ClipGeometry ClipGeometry::from(const model::SlowFastConfig& config) {
  ClipGeometry g;
  g.clip_len = config.clip_len;
  g.crop_size = config.crop_size;
  g.scale_short_side = config.scale_short_side;
  g.mean = config.norm_mean;
  g.std = config.norm_std;
  return g;
}

std::pair<int, int> scaled_size(int width, int height, int short_side) {
  if (width <= 0 || height <= 0) throw DataError("video has empty frames");
  if (width <= height) {
    return {short_side, static_cast<int>(std::lround(static_cast<double>(height) * short_side / width))};
  }
  return {static_cast<int>(std::lround(static_cast<double>(width) * short_side / height)), short_side};
}

int window_start(int frame_count, int clip_len, double center_fraction) {
  const int max_start = std::max(0, frame_count - clip_len);
  const long start = std::lround(center_fraction * frame_count - clip_len / 2.0);
  return static_cast<int>(std::clamp<long>(start, 0, max_start));
}

ClipPlacement draw_placement(const VideoFrames& video, SampleMode mode, const ClipGeometry& g,
                             const Augmentation& aug, Rng& rng) {
  const auto [sw, sh] = scaled_size(video.width, video.height, g.scale_short_side);
  const int max_x = sw - g.crop_size;
  const int max_y = sh - g.crop_size;
  const int max_start = std::max(0, video.frame_count() - g.clip_len);
  ClipPlacement p;
  p.temporal_start = max_start / 2;
  p.crop_x = max_x / 2;
  p.crop_y = max_y / 2;
  switch (mode) {
    case SampleMode::kEval:
      break;
    case SampleMode::kRandomClip:
      p.temporal_start = static_cast<int>(rng.uniform_int(0, max_start));
      p.crop_x = static_cast<int>(rng.uniform_int(0, max_x));
      p.crop_y = static_cast<int>(rng.uniform_int(0, max_y));
      break;
    case SampleMode::kTrain:
      if (aug.temporal_jitter) p.temporal_start = static_cast<int>(rng.uniform_int(0, max_start));
      if (aug.random_crop) {
        p.crop_x = static_cast<int>(rng.uniform_int(0, max_x));
        p.crop_y = static_cast<int>(rng.uniform_int(0, max_y));
      }
      p.flip = aug.flip_prob > 0 && rng.bernoulli(aug.flip_prob);
      break;
  }
  return p;
}

model::ClipTensor render_clip(const VideoFrames& video, const ClipPlacement& p, const ClipGeometry& g) {
  if (video.frames.empty()) throw DataError("video has no frames");
  const auto [sw, sh] = scaled_size(video.width, video.height, g.scale_short_side);
  if (p.crop_x < 0 || p.crop_y < 0 || p.crop_x + g.crop_size > sw || p.crop_y + g.crop_size > sh) {
    throw DataError("crop placement outside the scaled frame");
  }
  model::ClipTensor clip(g.clip_len, g.crop_size, g.crop_size);
  const int n = video.frame_count();
  std::map<int, cv::Mat> scaled;
  for (int t = 0; t < g.clip_len; ++t) {
    const int src = (p.temporal_start + t) % n;
    auto it = scaled.find(src);
    if (it == scaled.end()) {
      cv::Mat frame(video.height, video.width, CV_8UC3, const_cast<std::uint8_t*>(video.frames[static_cast<std::size_t>(src)].data()));
      cv::Mat out;
      if (sw == video.width && sh == video.height) {
        out = frame;
      } else {
        cv::resize(frame, out, cv::Size(sw, sh), 0, 0, cv::INTER_LINEAR);
      }
      it = scaled.emplace(src, out).first;
    }
    const cv::Mat& img = it->second;
    for (int y = 0; y < g.crop_size; ++y) {
      const std::uint8_t* row = img.ptr<std::uint8_t>(p.crop_y + y);
      for (int x = 0; x < g.crop_size; ++x) {
        const int sx = p.crop_x + (p.flip ? g.crop_size - 1 - x : x);
        for (int c = 0; c < 3; ++c) {
          clip.at(c, t, y, x) = (row[sx * 3 + c] / 255.0 - g.mean[static_cast<std::size_t>(c)]) / g.std[static_cast<std::size_t>(c)];
        }
      }
    }
    if (scaled.size() > 8 && n >= g.clip_len) scaled.erase(scaled.begin());
  }
  return clip;
}

model::ClipTensor preprocess_clip(const VideoFrames& video, SampleMode mode, const ClipGeometry& geometry,
                                  const Augmentation& augmentation, Rng& rng) {
  return render_clip(video, draw_placement(video, mode, geometry, augmentation, rng), geometry);
}

model::ClipTensor preprocess_clip(VideoSource& source, const VideoRecord& record, SampleMode mode,
                                  const ClipGeometry& geometry, const Augmentation& augmentation, Rng& rng) {
  const auto video = source.frames(record);
  try {
    return preprocess_clip(*video, mode, geometry, augmentation, rng);
  } catch (const Error& e) {
    throw DataError("record '" + record.id + "': " + e.what());
  }
}

std::vector<ClipPlacement> test_view_placements(const VideoFrames& video, const ClipGeometry& g) {
  const auto [sw, sh] = scaled_size(video.width, video.height, g.scale_short_side);
  const bool landscape = sw >= sh;
  const int long_free = (landscape ? sw : sh) - g.crop_size;
  const int short_center = ((landscape ? sh : sw) - g.crop_size) / 2;
  std::vector<ClipPlacement> out;
  for (double center : {1.0 / 3.0, 2.0 / 3.0}) {
    const int start = window_start(video.frame_count(), g.clip_len, center);
    for (int along : {0, long_free / 2, long_free}) {
      ClipPlacement p;
      p.temporal_start = start;
      p.crop_x = landscape ? along : short_center;
      p.crop_y = landscape ? short_center : along;
      out.push_back(p);
    }
  }
  return out;
}

std::vector<model::ClipTensor> enumerate_test_views(VideoSource& source, const VideoRecord& record,
                                                    const ClipGeometry& geometry) {
  const auto video = source.frames(record);
  std::vector<model::ClipTensor> views;
  try {
    for (const auto& p : test_view_placements(*video, geometry)) views.push_back(render_clip(*video, p, geometry));
  } catch (const Error& e) {
    throw DataError("record '" + record.id + "': " + e.what());
  }
  return views;
}

}  // namespace sfk::data
