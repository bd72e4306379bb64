#pragma once

#include <cstdint>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "sfk/data/manifest.hpp"

namespace sfk::data {

/// Decoded RGB frames, each width*height*3 bytes, row-major, interleaved.
struct VideoFrames {
  int width = 0;
  int height = 0;
  double fps = 0.0;
  std::vector<std::vector<std::uint8_t>> frames;

  int frame_count() const { return static_cast<int>(frames.size()); }
  std::size_t byte_size() const { return frames.size() * static_cast<std::size_t>(width) * height * 3; }
};

struct VideoProbe {
  int frame_count = 0;
  double fps = 0.0;
  double duration = 0.0;
  int width = 0;
  int height = 0;
};

/// Decodes a video file, or a directory of image frames in name order.
/// Throws DataError when nothing can be decoded.
VideoFrames decode_video(const std::filesystem::path& path);

/// Counts decodable frames; duration = frames / fps (fps from the container, 30 if absent).
VideoProbe probe_video(const std::filesystem::path& path);

/// Writes frames losslessly (FFV1 in an AVI/MKV container).
void write_video(const std::filesystem::path& path, const VideoFrames& video);

/// Decoded-clip cache file: "SFKCLIP\0", u32 version, u32 frames, u32 width,
/// u32 height, f64 fps, then frames * height * width * 3 RGB bytes.
/// Files live at <cache_dir>/v1/<sanitized id>-<fnv1a64 hex>.sfclip.
std::filesystem::path cache_file_for(const std::filesystem::path& cache_dir, const std::string& record_id);
void write_clip_cache(const std::filesystem::path& file, const VideoFrames& video);
std::optional<VideoFrames> read_clip_cache(const std::filesystem::path& file);

/// Resolves records to decoded frames through an optional on-disk cache and
/// a bounded in-memory LRU. Safe to share between worker threads.
class VideoSource {
 public:
  struct Options {
    std::filesystem::path cache_dir;
    std::size_t memory_budget_bytes = 512ull << 20;
  };

  explicit VideoSource(const DatasetManifest& manifest) : VideoSource(manifest, Options{}) {}
  VideoSource(const DatasetManifest& manifest, Options options);

  /// Throws DataError carrying the record id when the video cannot be decoded.
  std::shared_ptr<const VideoFrames> frames(const VideoRecord& record);

  std::filesystem::path path_of(const VideoRecord& record) const { return manifest_.resolve(record); }

 private:
  const DatasetManifest& manifest_;
  Options options_;
  std::mutex mutex_;
  std::list<std::string> lru_;
  std::map<std::string, std::pair<std::shared_ptr<const VideoFrames>, std::list<std::string>::iterator>> memory_;
  std::size_t memory_bytes_ = 0;
};

}  // namespace sfk::data
