#include <doctest.h>

#include <cmath>

#include "sfk/error.hpp"
#include "sfk/model/slowfast.hpp"
#include "support.hpp"

using namespace sfk;
using namespace sfk::model;

TEST_SUITE("slowfast") {
  TEST_CASE("pathway frame sampling takes every stride-th frame") {
    ClipTensor clip(8, 2, 2);
    for (int t = 0; t < 8; ++t) clip.at(0, t, 0, 0) = t;
    const auto s = sample_pathway_frames(clip, 4, 0);
    REQUIRE(s.time() == 2);
    CHECK(s.at(0, 0, 0, 0) == 0);
    CHECK(s.at(0, 1, 0, 0) == 4);
    CHECK(sample_pathway_frames(clip, 4, 1).at(0, 1, 0, 0) == 5);
    CHECK_THROWS_AS(sample_pathway_frames(clip, 3, 0), StructuralError);
    CHECK_THROWS_AS(sample_pathway_frames(clip, 4, 4), StructuralError);
  }

  TEST_CASE("micro network shapes follow the temporal strides") {
    const auto cfg = testing::micro_4x16(3);
    SlowFastNetwork net(cfg, 1);
    const auto tr = net.trace(testing::random_clips(cfg, 2, 5));
    CHECK(tr.slow_input == Shape{2, 3, 4, 32, 32});
    CHECK(tr.fast_input == Shape{2, 3, 32, 32, 32});
    CHECK(tr.slow_features.shape() == Shape{2, 512, 4, 1, 1});
    CHECK(tr.fast_features.shape() == Shape{2, 64, 32, 1, 1});
    CHECK(tr.logits.shape() == Shape{2, 3});
  }

  TEST_CASE("wrong input geometry is a structural error") {
    const auto cfg = testing::micro_4x16(2);
    SlowFastNetwork net(cfg, 1);
    CHECK_THROWS_AS(net.infer(Tensor({1, 3, 60, 32, 32})), StructuralError);
    CHECK_THROWS_AS(net.infer(Tensor({1, 3, 64, 40, 32})), StructuralError);
    CHECK_THROWS_AS(net.infer(Tensor({1, 1, 64, 32, 32})), StructuralError);
  }

  TEST_CASE("lateral connection checks alpha before computing") {
    Rng rng(1);
    LateralConnection lat("lat", 2, 4, 4, 5, FusionKind::kConcatenate, rng);
    const Tensor fast({1, 2, 8, 3, 3});
    CHECK(lat.fuse(fast, Tensor({1, 5, 2, 3, 3})).shape() == Shape{1, 9, 2, 3, 3});
    CHECK_THROWS_AS(lat.fuse(fast, Tensor({1, 5, 3, 3, 3})), StructuralError);
    CHECK_THROWS_AS(lat.fuse(fast, Tensor({1, 5, 2, 2, 3})), StructuralError);
    LateralConnection sum("sum", 2, 5, 4, 5, FusionKind::kSum, rng);
    CHECK(sum.fuse(fast, Tensor({1, 5, 2, 3, 3})).shape() == Shape{1, 5, 2, 3, 3});
    CHECK_THROWS_AS(sum.fuse(fast, Tensor({1, 6, 2, 3, 3})), StructuralError);
  }

  TEST_CASE("inference is deterministic and does not depend on training state") {
    const auto cfg = testing::gradcheck_config();
    SlowFastNetwork a(cfg, 9), b(cfg, 9);
    const Tensor x = testing::random_clips(cfg, 2, 3);
    const Tensor la = a.infer(x);
    const Tensor lb = b.infer(x);
    for (std::int64_t i = 0; i < la.numel(); ++i) CHECK(la[i] == lb[i]);
    SlowFastNetwork c(cfg, 10);
    const Tensor lc = c.infer(x);
    bool differs = false;
    for (std::int64_t i = 0; i < la.numel(); ++i) differs = differs || la[i] != lc[i];
    CHECK(differs);
  }

  TEST_CASE("input gradient matches central differences, both stems receive gradient") {
    const auto cfg = testing::gradcheck_config();
    for (std::uint64_t seed : {1u, 2u}) {
      SlowFastNetwork net(cfg, seed);
      testing::randomize_batchnorm(net, seed + 100);
      const auto r = testing::input_gradient_check(net, testing::random_clips(cfg, 2, seed), 20, seed);
      CHECK(r.coordinates == 20);
      CHECK(r.worst_relative_error < 1e-3);
      CHECK(r.slow_stem_grad_norm > 0);
      CHECK(r.fast_stem_grad_norm > 0);
    }
  }

  TEST_CASE("sum fusion network also backpropagates correctly") {
    auto cfg = testing::gradcheck_config();
    cfg.fusion_kind = FusionKind::kSum;
    SlowFastNetwork net(cfg, 3);
    testing::randomize_batchnorm(net, 7);
    const auto r = testing::input_gradient_check(net, testing::random_clips(cfg, 1, 4), 20, 5);
    CHECK(r.worst_relative_error < 1e-3);
  }

  TEST_CASE("softmax and cross-entropy") {
    const auto p = softmax(std::vector<Real>{1000, 1000});
    CHECK(p[0] == doctest::Approx(0.5));
    const Tensor logits({2, 3}, std::vector<Real>{0, 0, 0, 1, 2, 3});
    const std::vector<int> labels{0, 2};
    const auto l = softmax_cross_entropy(logits, labels);
    const auto q = softmax(std::vector<Real>{1, 2, 3});
    CHECK(l.loss == doctest::Approx((std::log(3.0) - std::log(q[2])) / 2));
    CHECK(l.grad[0] == doctest::Approx((1.0 / 3 - 1) / 2));
    CHECK(l.grad[5] == doctest::Approx((q[2] - 1) / 2));
    const std::vector<int> bad{0, 3};
    CHECK_THROWS(softmax_cross_entropy(logits, bad));
  }

  TEST_CASE("parameter names identify pathway and stage") {
    SlowFastNetwork net(testing::micro_4x16(2), 1);
    for (const char* n : {"slow.stem.conv.weight", "fast.stem.conv.weight", "lateral0.conv.weight",
                          "slow.res2.0.a.weight", "fast.res5.0.c.weight", "head.fc.weight", "head.fc.bias"}) {
      CAPTURE(n);
      CHECK(net.find_parameter(n) != nullptr);
    }
    CHECK(net.find_parameter("nope") == nullptr);
    CHECK(net.find_parameter("slow.stem.conv.weight")->value.shape() == Shape{16, 3, 1, 7, 7});
    CHECK(net.find_parameter("fast.stem.conv.weight")->value.shape() == Shape{2, 3, 5, 7, 7});
    CHECK(net.find_parameter("lateral0.conv.weight")->value.shape() == Shape{4, 2, 5, 1, 1});
  }
}
