#include "sfk/data/video.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "sfk/error.hpp"

namespace sfk::data {

namespace {

constexpr char kClipMagic[8] = {'S', 'F', 'K', 'C', 'L', 'I', 'P', '\0'};
constexpr std::uint32_t kClipVersion = 1;

bool is_image_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".ppm";
}

void append_frame(VideoFrames& v, const cv::Mat& bgr) {
  if (v.frames.empty()) {
    v.width = bgr.cols;
    v.height = bgr.rows;
  } else if (bgr.cols != v.width || bgr.rows != v.height) {
    throw DataError("frame size changes mid-video");
  }
  cv::Mat rgb;
  if (bgr.channels() == 1) {
    cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
  } else {
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  }
  std::vector<std::uint8_t> data(static_cast<std::size_t>(rgb.total() * 3));
  if (rgb.isContinuous()) {
    std::memcpy(data.data(), rgb.ptr(), data.size());
  } else {
    for (int y = 0; y < rgb.rows; ++y) std::memcpy(data.data() + static_cast<std::size_t>(y) * rgb.cols * 3, rgb.ptr(y), rgb.cols * 3);
  }
  v.frames.push_back(std::move(data));
}

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

VideoFrames decode_video(const std::filesystem::path& path) {
  VideoFrames v;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(path)) {
      if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      cv::Mat img = cv::imread(f.string(), cv::IMREAD_COLOR);
      if (img.empty()) throw DataError("cannot decode frame " + f.string());
      append_frame(v, img);
    }
    v.fps = 30.0;
  } else {
    if (!std::filesystem::exists(path)) throw DataError("video file not found: " + path.string());
    cv::VideoCapture cap(path.string());
    if (!cap.isOpened()) throw DataError("cannot open video " + path.string());
    v.fps = cap.get(cv::CAP_PROP_FPS);
    cv::Mat frame;
    while (cap.read(frame)) {
      if (frame.empty()) break;
      append_frame(v, frame);
    }
  }
  if (!(v.fps > 0)) v.fps = 30.0;
  if (v.frames.empty()) throw DataError("no decodable frames in " + path.string());
  return v;
}

VideoProbe probe_video(const std::filesystem::path& path) {
  const auto v = decode_video(path);
  VideoProbe p;
  p.frame_count = v.frame_count();
  p.fps = v.fps;
  p.duration = v.frame_count() / v.fps;
  p.width = v.width;
  p.height = v.height;
  return p;
}

void write_video(const std::filesystem::path& path, const VideoFrames& video) {
  if (video.frames.empty()) throw DataError("refusing to write an empty video");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  cv::VideoWriter writer(path.string(), cv::VideoWriter::fourcc('F', 'F', 'V', '1'), video.fps > 0 ? video.fps : 30.0,
                         cv::Size(video.width, video.height));
  if (!writer.isOpened()) throw DataError("cannot open video writer for " + path.string());
  cv::Mat bgr;
  for (const auto& f : video.frames) {
    cv::Mat rgb(video.height, video.width, CV_8UC3, const_cast<std::uint8_t*>(f.data()));
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    writer.write(bgr);
  }
}

std::filesystem::path cache_file_for(const std::filesystem::path& cache_dir, const std::string& record_id) {
  std::string safe;
  for (char c : record_id) safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
  return cache_dir / "v1" / (safe + "-" + fnv1a_hex(record_id) + ".sfclip");
}

void write_clip_cache(const std::filesystem::path& file, const VideoFrames& video) {
  std::filesystem::create_directories(file.parent_path());
  const auto tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write clip cache " + tmp);
    out.write(kClipMagic, sizeof(kClipMagic));
    const std::uint32_t header[4] = {kClipVersion, static_cast<std::uint32_t>(video.frames.size()),
                                     static_cast<std::uint32_t>(video.width), static_cast<std::uint32_t>(video.height)};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(&video.fps), sizeof(double));
    for (const auto& f : video.frames) out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size()));
  }
  std::filesystem::rename(tmp, file);
}

std::optional<VideoFrames> read_clip_cache(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  std::uint32_t header[4];
  VideoFrames v;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  in.read(reinterpret_cast<char*>(&v.fps), sizeof(double));
  if (!in || std::memcmp(magic, kClipMagic, sizeof(magic)) != 0 || header[0] != kClipVersion) return std::nullopt;
  v.width = static_cast<int>(header[2]);
  v.height = static_cast<int>(header[3]);
  const std::size_t frame_bytes = static_cast<std::size_t>(v.width) * v.height * 3;
  v.frames.resize(header[1]);
  for (auto& f : v.frames) {
    f.resize(frame_bytes);
    in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(frame_bytes));
  }
  if (!in || v.frames.empty()) return std::nullopt;
  return v;
}

VideoSource::VideoSource(const DatasetManifest& manifest, Options options)
    : manifest_(manifest), options_(std::move(options)) {}

std::shared_ptr<const VideoFrames> VideoSource::frames(const VideoRecord& record) {
  {
    std::lock_guard lock(mutex_);
    if (auto it = memory_.find(record.id); it != memory_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second.second);
      return it->second.first;
    }
  }
  std::shared_ptr<const VideoFrames> video;
  try {
    std::optional<VideoFrames> cached;
    std::filesystem::path cache_file;
    if (!options_.cache_dir.empty()) {
      cache_file = cache_file_for(options_.cache_dir, record.id);
      cached = read_clip_cache(cache_file);
    }
    if (cached) {
      video = std::make_shared<const VideoFrames>(std::move(*cached));
    } else {
      auto decoded = decode_video(manifest_.resolve(record));
      if (!cache_file.empty()) write_clip_cache(cache_file, decoded);
      video = std::make_shared<const VideoFrames>(std::move(decoded));
    }
  } catch (const Error& e) {
    throw DataError("record '" + record.id + "': " + e.what());
  } catch (const cv::Exception& e) {
    throw DataError("record '" + record.id + "': decoder failure: " + e.what());
  }

  std::lock_guard lock(mutex_);
  if (memory_.count(record.id) == 0 && video->byte_size() <= options_.memory_budget_bytes) {
    lru_.push_front(record.id);
    memory_[record.id] = {video, lru_.begin()};
    memory_bytes_ += video->byte_size();
    while (memory_bytes_ > options_.memory_budget_bytes && !lru_.empty()) {
      const auto victim = lru_.back();
      lru_.pop_back();
      memory_bytes_ -= memory_.at(victim).first->byte_size();
      memory_.erase(victim);
    }
  }
  return video;
}

}  // namespace sfk::data
