#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "sfk/data/preprocess.hpp"
#include "sfk/data/synthetic.hpp"
#include "sfk/error.hpp"
#include "sfk/eval/ensemble.hpp"
#include "sfk/eval/metrics.hpp"
#include "support.hpp"

using namespace sfk;
using namespace sfk::eval;

namespace {

std::vector<PredictionRecord> labelled(int correct, int wrong) {
  std::vector<PredictionRecord> out;
  for (int i = 0; i < correct + wrong; ++i) {
    PredictionRecord r;
    r.video_id = "v" + std::to_string(i);
    r.true_label = 0;
    r.predicted_label = i < correct ? 0 : 1;
    r.scores = i < correct ? std::vector<double>{0.9, 0.1} : std::vector<double>{0.1, 0.9};
    out.push_back(r);
  }
  return out;
}

std::vector<double> softmax(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double s = 0;
  for (std::size_t i = 0; i < z.size(); ++i) s += p[i] = std::exp(z[i] - m);
  for (auto& v : p) v /= s;
  return p;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("accuracy of 142 correct out of 192") {
    const auto r = labelled(142, 50);
    CHECK(correct_count(r) == 142);
    CHECK(accuracy(r) == doctest::Approx(73.958333).epsilon(1e-6));
    CHECK(error_rate(r) == doctest::Approx(26.041667).epsilon(1e-6));
  }

  TEST_CASE("binary counts") {
    const BinaryCounts c{.tp = 3, .tn = 2, .fp = 1, .fn = 2};
    CHECK(accuracy(c) == doctest::Approx(62.5));
    CHECK(error_rate(c) == doctest::Approx(37.5));
    CHECK_THROWS_AS(accuracy(BinaryCounts{}), InvalidArgument);
  }

  TEST_CASE("empty prediction sets are rejected") {
    const std::vector<PredictionRecord> none;
    CHECK_THROWS_AS(accuracy(none), InvalidArgument);
    CHECK_THROWS_AS(error_rate(none), InvalidArgument);
  }

  TEST_CASE("accuracy and error rate are complements") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      const auto r = testing::random_records(rng, static_cast<int>(rng.uniform_int(1, 50)), 4);
      CHECK(accuracy(r) + error_rate(r) == doctest::Approx(100.0));
      CHECK(accuracy(r) >= 0.0);
      CHECK(accuracy(r) <= 100.0);
    }
  }

  TEST_CASE("view sums pick the larger class and ties go low") {
    const std::vector<std::vector<double>> views{{1.0, 0.5}, {2.1, 2.4}};
    const auto s = sum_view_scores(views);
    CHECK(s[0] == doctest::Approx(3.1));
    CHECK(s[1] == doctest::Approx(2.9));
    CHECK(argmax(s) == 0);
    const std::vector<double> tie{1.0, 1.0, 0.5};
    CHECK(argmax(tie) == 0);
    const std::vector<std::vector<double>> ragged{{1.0}, {1.0, 2.0}};
    CHECK_THROWS(sum_view_scores(ragged));
  }

  TEST_CASE("ensemble decision is invariant to view order and positive scaling") {
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::vector<double>> views(6, std::vector<double>(5));
      for (auto& v : views)
        for (auto& x : v) x = rng.uniform(-3, 3);
      for (auto domain : {ScoreDomain::kProbability, ScoreDomain::kLogit}) {
        const int base = argmax(combine_view_scores(views, domain));
        auto shuffled = views;
        rng.shuffle(shuffled.begin(), shuffled.end());
        CHECK(argmax(combine_view_scores(shuffled, domain)) == base);
        auto scaled = sum_view_scores(views);
        for (auto& x : scaled) x *= 7.5;
        CHECK(argmax(scaled) == argmax(sum_view_scores(views)));
      }
    }
  }

  TEST_CASE("probability domain sums per-view softmax") {
    const std::vector<std::vector<double>> views{{3.0, 0.0}, {0.0, 1.0}, {0.0, 1.0}};
    // Logit sums favour class 0 (3 vs 2); probability sums favour class 1.
    CHECK(argmax(combine_view_scores(views, ScoreDomain::kLogit)) == 0);
    const auto p = combine_view_scores(views, ScoreDomain::kProbability);
    double expect1 = 0;
    for (const auto& v : views) expect1 += softmax(v)[1];
    CHECK(p[1] == doctest::Approx(expect1));
    CHECK(argmax(p) == 1);
  }

  TEST_CASE("confusion matrix of three records") {
    ConfusionMatrix cm({"serve", "smash", "lob"});
    cm.add(0, 0);
    cm.add(0, 1);
    cm.add(2, 2);
    CHECK(cm.total() == 3);
    CHECK(cm.trace() == 2);
    CHECK(cm.count(0, 1) == 1);
    CHECK(cm.count(1, 0) == 0);
    CHECK(cm.row_total(0) == 2);
    const auto pc = per_class_accuracy(cm);
    CHECK(*pc[0] == doctest::Approx(50.0));
    CHECK_FALSE(pc[1].has_value());
    CHECK(*pc[2] == doctest::Approx(100.0));
    CHECK(macro_accuracy(cm) == doctest::Approx(75.0));
    const auto t = cm.to_delimited();
    CHECK(t.rfind("true\\predicted\tserve\tsmash\tlob\n", 0) == 0);
    CHECK(t.find("serve\t1\t1\t0\n") != std::string::npos);
  }

  TEST_CASE("per-class accuracy of two out of five") {
    ConfusionMatrix cm({"a", "b"});
    for (int i = 0; i < 5; ++i) cm.add(1, i < 2 ? 1 : 0);
    CHECK(*per_class_accuracy(cm)[1] == doctest::Approx(40.0));
  }

  TEST_CASE("balanced classes: macro equals micro accuracy") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
      ConfusionMatrix cm({"a", "b", "c"});
      std::vector<PredictionRecord> recs;
      for (int c = 0; c < 3; ++c) {
        for (int i = 0; i < 10; ++i) {
          PredictionRecord r;
          r.true_label = c;
          r.predicted_label = static_cast<int>(rng.uniform_int(0, 2));
          recs.push_back(r);
          cm.add(r.true_label, r.predicted_label);
        }
      }
      CHECK(macro_accuracy(cm) == doctest::Approx(accuracy(recs)));
    }
  }

  TEST_CASE("out-of-range labels name the record") {
    ConfusionMatrix cm({"a", "b"});
    try {
      cm.add(0, 2, "clip-17");
      FAIL("expected InvalidArgument");
    } catch (const InvalidArgument& e) {
      CHECK(std::string(e.what()).find("clip-17") != std::string::npos);
    }
    CHECK_THROWS_AS(cm.add(-1, 0), InvalidArgument);
  }

  TEST_CASE("merging matrices adds counts") {
    Rng rng(2);
    const auto a = testing::random_records(rng, 30, 3);
    const auto b = testing::random_records(rng, 20, 3);
    auto all = a;
    all.insert(all.end(), b.begin(), b.end());
    const std::vector<std::string> names{"x", "y", "z"};
    auto m = confusion_matrix(a, names);
    m.merge(confusion_matrix(b, names));
    const auto direct = confusion_matrix(all, names);
    for (int t = 0; t < 3; ++t)
      for (int p = 0; p < 3; ++p) CHECK(m.count(t, p) == direct.count(t, p));
    CHECK_THROWS(m.merge(ConfusionMatrix({"x"})));
  }

  TEST_CASE("prediction files round trip and are validated") {
    testing::TempDir dir("preds");
    Rng rng(4);
    const auto recs = testing::random_records(rng, 12, 3);
    write_predictions(dir / "p.jsonl", recs);
    const auto back = read_predictions(dir / "p.jsonl");
    REQUIRE(back.size() == recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
      CHECK(back[i].video_id == recs[i].video_id);
      CHECK(back[i].predicted_label == recs[i].predicted_label);
      CHECK(back[i].scores == recs[i].scores);
    }
    { std::ofstream(dir / "bad.jsonl") << R"({"video_id":"a","true":0,"pred":1,"scores":[0.9,0.1],"views_used":1})" << "\n"; }
    CHECK_THROWS_AS(read_predictions(dir / "bad.jsonl"), DataError);
  }

  TEST_CASE("ensemble prediction equals the hand-summed six views") {
    testing::TempDir dir("ensemble");
    data::SyntheticDatasetSpec spec;
    spec.classes = {"left", "right"};
    spec.per_class = 1;
    spec.width = 48;
    spec.height = 32;
    spec.frames = 20;
    const auto m = data::write_synthetic_dataset(dir.path(), spec);
    auto cfg = testing::gradcheck_config();
    cfg.scale_short_side = 32;
    auto net = model::build_slowfast(cfg, 6);
    testing::randomize_batchnorm(*net, 6);
    data::VideoSource src(m);
    const auto geometry = data::ClipGeometry::from(cfg);
    for (const auto& rec : m.records) {
      const auto views = data::enumerate_test_views(src, rec, geometry);
      REQUIRE(views.size() == 6);
      std::vector<double> sum(2, 0.0);
      for (const auto& v : views) {
        const auto p = softmax(net->predict(v, false).scores);
        for (std::size_t k = 0; k < 2; ++k) sum[k] += p[k];
      }
      const auto got = ensemble_predict(*net, src, rec);
      CHECK(got.views_used == 6);
      CHECK(got.scores[0] == doctest::Approx(sum[0]));
      CHECK(got.scores[1] == doctest::Approx(sum[1]));
      CHECK(got.predicted_label == (sum[1] > sum[0] ? 1 : 0));
      CHECK(single_clip_predict(*net, src, rec).views_used == 1);
    }
    std::vector<const data::VideoRecord*> ptrs;
    for (const auto& r : m.records) ptrs.push_back(&r);
    const auto serial = evaluate_records(*net, src, ptrs, EvalProtocol::kEnsemble3x2);
    const auto threaded = evaluate_records(*net, src, ptrs, EvalProtocol::kEnsemble3x2, ScoreDomain::kProbability, 2);
    for (std::size_t i = 0; i < serial.size(); ++i) CHECK(serial[i].scores == threaded[i].scores);
  }
}
