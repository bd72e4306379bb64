#include <doctest.h>

#include <fstream>
#include <opencv2/imgcodecs.hpp>

#include "sfk/data/synthetic.hpp"
#include "sfk/data/video.hpp"
#include "sfk/error.hpp"
#include "support.hpp"

using namespace sfk;
using namespace sfk::data;

namespace {

VideoRecord record_for(const std::string& id, const std::string& path) {
  VideoRecord r;
  r.id = id;
  r.path = path;
  r.class_label = "a";
  r.class_index = 0;
  r.frame_count = 1;
  r.duration = 1;
  return r;
}

}  // namespace

TEST_SUITE("video") {
  TEST_CASE("lossless write/decode round trip and probe") {
    testing::TempDir dir("video");
    const auto v = make_noise_video(40, 24, 20, 5);
    write_video(dir / "n.avi", v);
    const auto back = decode_video(dir / "n.avi");
    REQUIRE(back.frame_count() == 20);
    CHECK(back.width == 40);
    CHECK(back.height == 24);
    for (int i = 0; i < 20; ++i) CHECK(back.frames[static_cast<std::size_t>(i)] == v.frames[static_cast<std::size_t>(i)]);
    const auto p = probe_video(dir / "n.avi");
    CHECK(p.frame_count == 20);
    CHECK(p.duration == doctest::Approx(20 / p.fps));
  }

  TEST_CASE("image directories decode in name order") {
    testing::TempDir dir("frames");
    std::filesystem::create_directories(dir / "f");
    for (int i = 0; i < 3; ++i) {
      cv::Mat m(8, 10, CV_8UC3, cv::Scalar(i * 50, i * 50, i * 50));
      cv::imwrite((dir / "f" / ("img_" + std::to_string(i) + ".png")).string(), m);
    }
    const auto v = decode_video(dir / "f");
    REQUIRE(v.frame_count() == 3);
    CHECK(v.frames[2][0] == 100);
    CHECK(probe_video(dir / "f").duration == doctest::Approx(0.1));
  }

  TEST_CASE("undecodable input throws DataError") {
    testing::TempDir dir("bad");
    { std::ofstream(dir / "bad.avi") << "not a video"; }
    CHECK_THROWS_AS(decode_video(dir / "bad.avi"), DataError);
    CHECK_THROWS_AS(decode_video(dir / "missing.avi"), DataError);
  }

  TEST_CASE("clip cache round trip and corruption") {
    testing::TempDir dir("cache");
    const auto v = make_noise_video(6, 4, 3, 1);
    const auto f = cache_file_for(dir.path(), "weird/id with space");
    CHECK(f.parent_path() == dir.path() / "v1");
    CHECK(cache_file_for(dir.path(), "a") != cache_file_for(dir.path(), "b"));
    write_clip_cache(f, v);
    const auto back = read_clip_cache(f);
    REQUIRE(back);
    CHECK(back->frames == v.frames);
    std::filesystem::resize_file(f, std::filesystem::file_size(f) - 5);
    CHECK_FALSE(read_clip_cache(f));
    CHECK_FALSE(read_clip_cache(dir / "nope.sfclip"));
  }

  TEST_CASE("VideoSource decodes, caches and names failing records") {
    testing::TempDir dir("source");
    write_video(dir / "ok.avi", make_noise_video(16, 16, 5, 2));
    DatasetManifest m;
    m.base_dir = dir.path();
    m.classes = {"a"};
    m.records = {record_for("ok", "ok.avi"), record_for("gone", "gone.avi")};
    VideoSource src(m, {.cache_dir = dir / "cache", .memory_budget_bytes = 1 << 20});
    const auto a = src.frames(m.records[0]);
    CHECK(a->frame_count() == 5);
    CHECK(std::filesystem::exists(cache_file_for(dir / "cache", "ok")));
    CHECK(src.frames(m.records[0]).get() == a.get());
    try {
      src.frames(m.records[1]);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("'gone'") != std::string::npos);
    }
    // A fresh source with the same cache does not need the original file.
    std::filesystem::remove(dir / "ok.avi");
    VideoSource again(m, {.cache_dir = dir / "cache", .memory_budget_bytes = 0});
    CHECK(again.frames(m.records[0])->frames == a->frames);
  }

  TEST_CASE("synthetic dataset is written with a loadable manifest") {
    testing::TempDir dir("synthetic");
    SyntheticDatasetSpec spec;
    spec.classes = {"left", "right"};
    spec.per_class = 2;
    spec.width = 24;
    spec.height = 24;
    spec.frames = 16;
    const auto m = write_synthetic_dataset(dir.path(), spec);
    CHECK(m.records.size() == 4);
    const auto loaded = load_manifest(dir / "manifest.csv");
    CHECK(loaded.records.size() == 4);
    CHECK(decode_video(loaded.resolve(loaded.records[0])).frame_count() == 16);
  }
}
