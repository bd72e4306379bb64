#include <doctest.h>

#include <cmath>
#include <set>

#include "sfk/data/preprocess.hpp"
#include "sfk/data/synthetic.hpp"
#include "sfk/error.hpp"

using namespace sfk;
using namespace sfk::data;

namespace {

// Each frame has a constant value equal to its index, so temporal placement is observable.
VideoFrames indexed_video(int w, int h, int frames) {
  VideoFrames v;
  v.width = w;
  v.height = h;
  v.fps = 30;
  for (int f = 0; f < frames; ++f) v.frames.emplace_back(static_cast<std::size_t>(w * h * 3), static_cast<std::uint8_t>(f));
  return v;
}

// Pixel value encodes its column, so spatial placement and flips are observable.
VideoFrames column_video(int w, int h) {
  VideoFrames v;
  v.width = w;
  v.height = h;
  v.fps = 30;
  std::vector<std::uint8_t> f(static_cast<std::size_t>(w * h * 3));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) f[static_cast<std::size_t>((y * w + x) * 3 + c)] = static_cast<std::uint8_t>(x);
  v.frames.push_back(f);
  return v;
}

ClipGeometry geometry(int clip_len, int crop, int scale) {
  ClipGeometry g;
  g.clip_len = clip_len;
  g.crop_size = crop;
  g.scale_short_side = scale;
  g.mean = {0, 0, 0};
  g.std = {1.0 / 255, 1.0 / 255, 1.0 / 255};  // so rendered values equal raw bytes
  return g;
}

}  // namespace

TEST_SUITE("preprocess") {
  TEST_CASE("shorter side scaling preserves aspect ratio") {
    CHECK(scaled_size(640, 480, 256) == std::pair{341, 256});
    CHECK(scaled_size(480, 640, 256) == std::pair{256, 341});
    CHECK(scaled_size(256, 256, 256) == std::pair{256, 256});
    CHECK_THROWS_AS(scaled_size(0, 5, 256), DataError);
  }

  TEST_CASE("64-frame video with a 64-frame clip is the identity in time") {
    const auto v = indexed_video(8, 8, 64);
    const auto g = geometry(64, 8, 8);
    Rng rng(0);
    for (auto mode : {SampleMode::kEval, SampleMode::kRandomClip, SampleMode::kTrain}) {
      const auto clip = preprocess_clip(v, mode, g, {}, rng);
      for (int t = 0; t < 64; ++t) CHECK(clip.at(0, t, 3, 3) == doctest::Approx(t));
    }
    for (const auto& p : test_view_placements(v, g)) CHECK(p.temporal_start == 0);
  }

  TEST_CASE("short videos loop") {
    const auto v = indexed_video(8, 8, 10);
    const auto clip = render_clip(v, {}, geometry(25, 8, 8));
    for (int t = 0; t < 25; ++t) CHECK(clip.at(1, t, 0, 0) == doctest::Approx(t % 10));
  }

  TEST_CASE("windows centered at one and two thirds") {
    CHECK(window_start(300, 64, 1.0 / 3) == 68);
    CHECK(window_start(300, 64, 2.0 / 3) == 168);
    CHECK(window_start(70, 64, 1.0 / 3) == 0);
    CHECK(window_start(70, 64, 2.0 / 3) == 6);
    // Videos that barely exceed the clip length give coinciding windows.
    CHECK(window_start(65, 64, 1.0 / 3) == window_start(65, 64, 2.0 / 3) - 1);
    CHECK(window_start(64, 64, 1.0 / 3) == window_start(64, 64, 2.0 / 3));
  }

  TEST_CASE("six test views: two windows by three crops along the long side") {
    const auto v = indexed_video(640, 480, 300);
    const auto g = geometry(64, 224, 256);
    const auto views = test_view_placements(v, g);
    REQUIRE(views.size() == 6);
    const int xs[] = {0, 58, 117};
    for (int i = 0; i < 6; ++i) {
      CAPTURE(i);
      CHECK(views[static_cast<std::size_t>(i)].temporal_start == (i < 3 ? 68 : 168));
      CHECK(views[static_cast<std::size_t>(i)].crop_x == xs[i % 3]);
      CHECK(views[static_cast<std::size_t>(i)].crop_y == 16);
      CHECK_FALSE(views[static_cast<std::size_t>(i)].flip);
    }
    const auto portrait = test_view_placements(indexed_video(480, 640, 300), g);
    CHECK(portrait[2].crop_x == 16);
    CHECK(portrait[2].crop_y == 117);
  }

  TEST_CASE("square videos give three coinciding crops") {
    const auto views = test_view_placements(indexed_video(32, 32, 20), geometry(8, 32, 32));
    std::set<std::pair<int, int>> crops;
    for (const auto& p : views) crops.insert({p.crop_x, p.crop_y});
    CHECK(crops.size() == 1);
  }

  TEST_CASE("eval placement is centered; train respects augmentation switches") {
    const auto v = indexed_video(64, 48, 100);
    const auto g = geometry(16, 32, 48);
    Rng rng(3);
    const auto e = draw_placement(v, SampleMode::kEval, g, {}, rng);
    CHECK(e.temporal_start == 42);
    CHECK(e.crop_x == 16);
    CHECK(e.crop_y == 8);
    const Augmentation off{.flip_prob = 0, .random_crop = false, .temporal_jitter = false};
    for (int i = 0; i < 20; ++i) CHECK(draw_placement(v, SampleMode::kTrain, g, off, rng) == e);
    int flips = 0;
    for (int i = 0; i < 400; ++i) flips += draw_placement(v, SampleMode::kTrain, g, {}, rng).flip;
    CHECK(flips > 150);
    CHECK(flips < 250);
    for (int i = 0; i < 50; ++i) CHECK_FALSE(draw_placement(v, SampleMode::kRandomClip, g, {}, rng).flip);
  }

  TEST_CASE("normalization uses the configured mean and std") {
    auto v = indexed_video(4, 4, 1);
    for (auto& b : v.frames[0]) b = 255;
    ClipGeometry g = geometry(1, 4, 4);
    g.mean = {0.5, 0.25, 0};
    g.std = {0.5, 0.25, 2};
    const auto clip = render_clip(v, {}, g);
    CHECK(clip.at(0, 0, 0, 0) == doctest::Approx(1.0));
    CHECK(clip.at(1, 0, 0, 0) == doctest::Approx(3.0));
    CHECK(clip.at(2, 0, 0, 0) == doctest::Approx(0.5));
  }

  TEST_CASE("horizontal flip mirrors the crop") {
    const auto v = column_video(12, 4);
    const auto g = geometry(1, 4, 4);
    ClipPlacement p;
    p.crop_x = 5;
    const auto plain = render_clip(v, p, g);
    p.flip = true;
    const auto flipped = render_clip(v, p, g);
    for (int x = 0; x < 4; ++x) {
      CHECK(plain.at(0, 0, 2, x) == doctest::Approx(5 + x));
      CHECK(flipped.at(0, 0, 2, x) == doctest::Approx(8 - x));
    }
  }

  TEST_CASE("placements outside the frame are rejected with the record id") {
    const auto v = indexed_video(8, 8, 4);
    ClipPlacement p;
    p.crop_x = 4;
    CHECK_THROWS_AS(render_clip(v, p, geometry(4, 8, 8)), DataError);
    DatasetManifest m;
    m.classes = {"a"};
    VideoRecord r;
    r.id = "missing-one";
    r.path = "/nonexistent/file.avi";
    m.records.push_back(r);
    VideoSource src(m);
    Rng rng(1);
    try {
      preprocess_clip(src, m.records[0], SampleMode::kEval, geometry(4, 8, 8), {}, rng);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("missing-one") != std::string::npos);
    }
  }
}
