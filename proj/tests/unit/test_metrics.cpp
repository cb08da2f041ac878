#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "geoperc/error.hpp"
#include "geoperc/metrics.hpp"
#include "test_util.hpp"

using namespace geoperc;
using namespace geoperc::testing;

namespace {

struct Best {
  std::size_t count = 0;
  double total = 0.0;
};

// Exhaustive enumeration of every partial injective matching.
void enumerate(const std::vector<std::vector<double>>& iou, double thr, std::size_t row,
               std::vector<char>& used, std::size_t count, double total, Best& best) {
  if (row == iou.size()) {
    if (count > best.count || (count == best.count && total > best.total)) best = {count, total};
    return;
  }
  enumerate(iou, thr, row + 1, used, count, total, best);
  for (std::size_t c = 0; c < used.size(); ++c) {
    if (used[c] || iou[row][c] < thr) continue;
    used[c] = 1;
    enumerate(iou, thr, row + 1, used, count + 1, total + iou[row][c], best);
    used[c] = 0;
  }
}

Best brute_force(const std::vector<std::vector<double>>& iou, std::size_t cols, double thr) {
  Best best;
  std::vector<char> used(cols, 0);
  enumerate(iou, thr, 0, used, 0, 0.0, best);
  return best;
}

OrientedBox3 unit_box(const Vec3& c) { return OrientedBox3(c, {1, 1, 1}, {0, 0, 0}); }

using Tokens = std::vector<std::string>;

}  // namespace

TEST_CASE("max_iou_matching agrees with exhaustive enumeration") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const auto rows = static_cast<std::size_t>(rng() % 7);
    const auto cols = static_cast<std::size_t>(rng() % 7);
    std::vector<std::vector<double>> iou(rows, std::vector<double>(cols));
    for (auto& r : iou)
      for (auto& v : r) v = rng() % 3 == 0 ? 0.0 : uniform(rng, 0.0, 1.0);
    const double thr = 0.25;
    const auto pairs = max_iou_matching(iou, thr);
    const Best expect = brute_force(iou, cols, thr);
    REQUIRE(pairs.size() == expect.count);
    double total = 0.0;
    std::vector<char> rused(rows, 0), cused(cols, 0);
    for (auto [r, c] : pairs) {
      CHECK(iou[r][c] >= thr);
      CHECK_FALSE(rused[r]);
      CHECK_FALSE(cused[c]);
      rused[r] = cused[c] = 1;
      total += iou[r][c];
    }
    CHECK(total == doctest::Approx(expect.total).epsilon(1e-12));
  }
}

TEST_CASE("matching prefers cardinality over total IoU") {
  // Greedy on the 0.9 edge would leave one side unmatched.
  const std::vector<std::vector<double>> iou{{0.9, 0.5}, {0.6, 0.0}};
  const auto pairs = max_iou_matching(iou, 0.25);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0] == std::pair<std::size_t, std::size_t>{0, 1});
  CHECK(pairs[1] == std::pair<std::size_t, std::size_t>{1, 0});
}

TEST_CASE("detection_prf examples") {
  const std::vector<std::string> classes{"chair", "table"};
  const OrientedBox3 box({0.32, 0.6, 1.05}, {0.86, 1.7, 0.87}, {-1.34, 1.08, -2.84});

  SUBCASE("exact single match") {
    DetectionScene s{"s0", {{{"table", box}}, 0, {}}, {{"table", box}}};
    const auto m = detection_prf(std::span(&s, 1), 0.25, classes);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
  }
  SUBCASE("two identical predictions, one ground truth") {
    DetectionScene s{"s0", {{{"table", box}, {"Table ", box}}, 0, {}}, {{"table", box}}};
    const auto m = detection_prf(std::span(&s, 1), 0.25, classes);
    CHECK(m.tp == 1);
    CHECK(m.fp == 1);
    CHECK(m.fn == 0);
    CHECK(m.precision == 0.5);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("class mismatch and out-of-list predictions") {
    DetectionScene s{"s0", {{{"chair", box}, {"sofa", box}}, 2, {}}, {{"table", box}}};
    const auto m = detection_prf(std::span(&s, 1), 0.25, classes);
    CHECK(m.tp == 0);
    CHECK(m.fp == 1);
    CHECK(m.fn == 1);
    CHECK(m.out_of_list == 1);
    CHECK(m.parse_failures == 2);
    const auto strict = detection_prf(std::span(&s, 1), 0.25, classes, true);
    CHECK(strict.fp == 3);
  }
  SUBCASE("empty everything") {
    const auto m = detection_prf({}, 0.25, classes);
    CHECK(m.precision == 0.0);
    CHECK(m.recall == 0.0);
    CHECK(m.f1 == 0.0);
  }
  CHECK_THROWS_AS(detection_prf({}, 0.25, std::span<const std::string>{}), InvalidArgument);
  CHECK_THROWS_AS(detection_prf({}, 1.0, classes), InvalidArgument);
  CHECK_THROWS_AS(detection_prf({}, 0.0, classes), InvalidArgument);
}

TEST_CASE("detection_prf count identities on random scenes") {
  std::mt19937_64 rng(77);
  const std::vector<std::string> classes{"a", "b", "c"};
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<DetectionScene> scenes(3);
    std::size_t n_gt = 0, n_pred = 0;
    for (auto& s : scenes) {
      const auto ng = rng() % 7, np = rng() % 7;
      for (std::size_t i = 0; i < ng; ++i)
        s.gt.push_back({classes[rng() % 3], random_box(rng, 1.0, 0.4, 1.2)});
      for (std::size_t i = 0; i < np; ++i) {
        auto e = s.gt.empty() || rng() % 2 ? DetectionEntry{classes[rng() % 3], random_box(rng, 1.0, 0.4, 1.2)}
                                           : s.gt[rng() % s.gt.size()];
        s.pred.entries.push_back(e);
      }
      n_gt += ng;
      n_pred += np;
    }
    const auto m = detection_prf(scenes, 0.25, classes);
    CHECK(m.tp + m.fn == n_gt);
    CHECK(m.tp + m.fp == n_pred);

    // tp equals the exhaustive oracle summed over scenes and classes.
    std::size_t oracle_tp = 0;
    for (const auto& s : scenes)
      for (const auto& c : classes) {
        std::vector<const OrientedBox3*> p, g;
        for (const auto& e : s.pred.entries)
          if (e.label == c) p.push_back(&e.bbox_3d);
        for (const auto& e : s.gt)
          if (e.label == c) g.push_back(&e.bbox_3d);
        std::vector<std::vector<double>> iou(p.size(), std::vector<double>(g.size()));
        for (std::size_t i = 0; i < p.size(); ++i)
          for (std::size_t j = 0; j < g.size(); ++j) iou[i][j] = box_iou(*p[i], *g[j]);
        oracle_tp += brute_force(iou, g.size(), 0.25).count;
      }
    CHECK(m.tp == oracle_tp);
  }
}

TEST_CASE("grounding_accuracy") {
  const OrientedBox3 gt = unit_box({0, 0, 0});
  SUBCASE("perfect") {
    const std::vector<GroundingPrediction> p{{"a", gt}, {"b", gt}};
    const std::vector<GroundingTruth> g{{"a", gt}, {"b", gt}};
    const auto r = grounding_accuracy(p, g);
    CHECK(r.acc_025 == 1.0);
    CHECK(r.acc_05 == 1.0);
  }
  SUBCASE("all parse failures") {
    const std::vector<GroundingPrediction> p{{"a", std::nullopt}};
    const std::vector<GroundingTruth> g{{"a", gt}};
    const auto r = grounding_accuracy(p, g);
    CHECK(r.acc_025 == 0.0);
    CHECK(r.acc_05 == 0.0);
    CHECK(r.n_parse_failures == 1);
  }
  SUBCASE("IoU one third counts only at 0.25") {
    // Half-unit shift: intersection 0.5, union 1.5.
    const std::vector<GroundingPrediction> p{{"a", unit_box({0.5, 0, 0})}};
    const std::vector<GroundingTruth> g{{"a", gt}};
    const auto r = grounding_accuracy(p, g);
    CHECK(r.ious[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(r.acc_025 == 1.0);
    CHECK(r.acc_05 == 0.0);
  }
  SUBCASE("id mismatch") {
    const std::vector<GroundingPrediction> p{{"a", gt}};
    const std::vector<GroundingTruth> g{{"b", gt}};
    CHECK_THROWS_AS(grounding_accuracy(p, g), InvalidArgument);
  }
  SUBCASE("acc at 0.5 never exceeds acc at 0.25") {
    std::mt19937_64 rng(5);
    std::vector<GroundingPrediction> p;
    std::vector<GroundingTruth> g;
    for (int i = 0; i < 200; ++i) {
      const auto b = random_box(rng, 0.3, 0.5, 1.0);
      g.push_back({std::to_string(i), b});
      p.push_back({std::to_string(i), random_box(rng, 0.3, 0.5, 1.0)});
    }
    const auto r = grounding_accuracy(p, g);
    CHECK(r.acc_05 <= r.acc_025);
  }
}

TEST_CASE("tokenize_caption") {
  CHECK(tokenize_caption("The chair, is BROWN.") == Tokens{"the", "chair", "is", "brown"});
  CHECK(tokenize_caption("  ").empty());
}

TEST_CASE("corpus BLEU-4 hand fixture") {
  const std::vector<Tokens> cands{tokenize_caption("the cat sat on the mat"),
                                  tokenize_caption("a dog runs in the park")};
  const std::vector<std::vector<Tokens>> refs{{tokenize_caption("the cat is on the mat")},
                                              {tokenize_caption("a dog runs in the park")}};
  // Clipped matches / totals for n = 1..4: 11/12, 8/10, 5/8, 3/6; equal lengths, no penalty.
  const double expected = std::pow(11.0 / 12.0 * 8.0 / 10.0 * 5.0 / 8.0 * 3.0 / 6.0, 0.25);
  CHECK(std::abs(corpus_bleu4(cands, refs) - expected) <= 1e-9);

  // A single shared bigram and no shared 4-gram gives 0 without smoothing.
  const std::vector<Tokens> c2{tokenize_caption("red chair near window")};
  const std::vector<std::vector<Tokens>> r2{{tokenize_caption("a red chair by the door")}};
  CHECK(corpus_bleu4(c2, r2) == 0.0);

  // Brevity penalty with the closest reference length (shorter on ties).
  const std::vector<Tokens> c3{tokenize_caption("a b c d e")};
  const std::vector<std::vector<Tokens>> r3{{tokenize_caption("a b c d e f g"), tokenize_caption("a b c")}};
  CHECK(std::abs(corpus_bleu4(c3, r3) - 1.0) <= 1e-15);
  const std::vector<std::vector<Tokens>> r4{{tokenize_caption("a b c d e f g h")}};
  CHECK(std::abs(corpus_bleu4(c3, r4) - std::exp(1.0 - 8.0 / 5.0)) <= 1e-12);
}

TEST_CASE("ROUGE-L") {
  // LCS "the cat on the mat" = 5 of 6 on both sides.
  CHECK(rouge_l(tokenize_caption("the cat sat on the mat"), {tokenize_caption("the cat is on the mat")}) ==
        doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  const double p = 2.0 / 3.0, r = 2.0 / 4.0, b2 = 1.44;
  CHECK(rouge_l(tokenize_caption("x a b"), {tokenize_caption("a y b z")}) ==
        doctest::Approx((1 + b2) * p * r / (r + b2 * p)).epsilon(1e-15));
  CHECK(rouge_l({}, {tokenize_caption("a")}) == 0.0);
  CHECK_THROWS_AS(rouge_l(tokenize_caption("a"), {}), InvalidArgument);
}

TEST_CASE("caption_scores gating and exact match") {
  const std::vector<CaptionSample> exact{
      {"this is a brown wooden chair", {"this is a brown wooden chair"}, 1.0},
      {"the monitor sits on the desk", {"the monitor sits on the desk"}, 0.8}};
  const auto s = caption_scores(exact);
  CHECK(s.bleu4 == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.rouge_l == doctest::Approx(1.0).epsilon(1e-15));
  // Identical TF-IDF vectors with nonzero IDF give cosine 1 for every n, times 10.
  CHECK(s.cider == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(s.n_passing == 2);

  auto gated = exact;
  for (auto& g : gated) g.iou = 0.0;
  const auto z = caption_scores(gated);
  CHECK(z.bleu4 == 0.0);
  CHECK(z.rouge_l == 0.0);
  CHECK(z.cider == 0.0);

  auto half = exact;
  half[1].iou = 0.49;
  const auto h = caption_scores(half);
  CHECK(h.bleu4 == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(h.rouge_l == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(h.cider == doctest::Approx(5.0).epsilon(1e-12));

  CHECK_THROWS_AS(caption_scores(std::vector<CaptionSample>{{"a", {}, 1.0}}), InvalidArgument);
  CHECK_THROWS_AS(caption_scores(std::vector<CaptionSample>{}), InvalidArgument);
}

TEST_CASE("caption scores stay in range on random corpora") {
  std::mt19937_64 rng(11);
  const std::vector<std::string> vocab{"the", "a", "chair", "table", "is", "near", "brown", "door", "of", "room"};
  auto sentence = [&] {
    std::string s;
    const auto n = 1 + rng() % 9;
    for (std::size_t i = 0; i < n; ++i) s += vocab[rng() % vocab.size()] + " ";
    return s;
  };
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<CaptionSample> samples;
    for (int i = 0; i < 6; ++i) samples.push_back({sentence(), {sentence(), sentence()}, uniform(rng, 0, 1)});
    const auto s = caption_scores(samples);
    CHECK(s.bleu4 >= 0.0);
    CHECK(s.bleu4 <= 1.0);
    CHECK(s.rouge_l >= 0.0);
    CHECK(s.rouge_l <= 1.0);
    CHECK(s.cider >= 0.0);
    const auto again = caption_scores(samples);
    CHECK(again.cider == s.cider);
    CHECK(again.bleu4 == s.bleu4);
  }
}

TEST_CASE("KdTree3 agrees with brute force") {
  std::mt19937_64 rng(3);
  std::vector<Vec3> pts;
  for (int i = 0; i < 500; ++i) pts.push_back(random_vec(rng, -1, 1));
  const KdTree3 tree(pts);
  for (int q = 0; q < 300; ++q) {
    const Vec3 p = random_vec(rng, -1.5, 1.5);
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (norm(pts[i] - p) < norm(pts[best] - p)) best = i;
    const auto [idx, d] = tree.nearest(p);
    CHECK(idx == best);
    CHECK(d == norm(pts[best] - p));
  }
  CHECK_THROWS_AS(KdTree3({}).nearest({0, 0, 0}), InvalidArgument);
}

TEST_CASE("median") {
  CHECK(median({3, 1, 2}) == 2.0);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK_THROWS_AS(median({}), InvalidArgument);
}

TEST_CASE("pointmap_eval") {
  std::vector<Vec3> grid;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 5; ++j)
      for (int k = 0; k < 4; ++k) grid.push_back({0.5 * i, 0.5 * j - 1.0, 1.0 + 0.5 * k});

  SUBCASE("identity is zero in both modes") {
    for (auto mode : {PointmapMode::metric, PointmapMode::aligned}) {
      const auto m = pointmap_eval(grid, grid, mode);
      CHECK(m.overall.mean <= 1e-12);
      CHECK(m.overall.median <= 1e-12);
    }
  }
  SUBCASE("single point shifted by 0.1 m") {
    const std::vector<Vec3> g{{1, 2, 3}}, p{{1.1, 2, 3}};
    const auto m = pointmap_eval(p, g, PointmapMode::metric);
    CHECK(std::abs(m.accuracy.mean - 0.1) <= 1e-12);
    CHECK(std::abs(m.completeness.mean - 0.1) <= 1e-12);
    CHECK(std::abs(m.overall.mean - 0.1) <= 1e-12);
  }
  SUBCASE("0.1 m displacement of a sparse grid") {
    std::vector<Vec3> p;
    for (const auto& g : grid) p.push_back(g + Vec3{0.1, 0, 0});
    const auto m = pointmap_eval(p, grid, PointmapMode::metric);
    for (double v : {m.accuracy.mean, m.accuracy.median, m.completeness.mean, m.completeness.median,
                     m.overall.mean, m.overall.median})
      CHECK(std::abs(v - 0.1) <= 1e-12);
  }
  SUBCASE("aligned mode cancels a similarity transform") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
      const Sim3 s(uniform(rng, 0.3, 3.0), random_rotation(rng), random_vec(rng, -5, 5));
      std::vector<Vec3> p;
      for (const auto& g : grid) p.push_back(s.apply(g));
      const auto aligned = pointmap_eval(p, grid, PointmapMode::aligned);
      CHECK(aligned.overall.mean <= 1e-6);
      CHECK(aligned.overall.median <= 1e-6);
      const auto metric = pointmap_eval(p, grid, PointmapMode::metric);
      CHECK(metric.overall.mean > 1e-2);
    }
  }
  CHECK_THROWS_AS(pointmap_eval({}, grid, PointmapMode::metric), InvalidArgument);
  CHECK_THROWS_AS(pointmap_eval(std::vector<Vec3>{{0, 0, 0}}, grid, PointmapMode::aligned), InvalidArgument);
  CHECK(parse_pointmap_mode("aligned") == PointmapMode::aligned);
  CHECK(to_string(PointmapMode::metric) == "metric");
  CHECK_THROWS_AS(parse_pointmap_mode("both"), InvalidArgument);
}

TEST_CASE("aggregate_scenes") {
  PointmapMetrics a, b;
  a.accuracy = {0.1, 0.1};
  b.accuracy = {0.3, 0.2};
  a.completeness = {0.2, 0.1};
  b.completeness = {0.4, 0.3};
  a.accuracy_distances = {0.1};
  b.accuracy_distances = {0.2, 0.4};
  a.completeness_distances = {0.1};
  b.completeness_distances = {0.3, 0.3};
  const std::vector<PointmapMetrics> both{a, b};
  const auto m = aggregate_scenes(both);
  CHECK(m.accuracy.mean == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(m.overall.mean == doctest::Approx(0.25).epsilon(1e-15));
  const auto pooled = aggregate_scenes(both, true);
  CHECK(pooled.accuracy.median == 0.2);
  CHECK(pooled.completeness.median == 0.3);

  const auto one = aggregate_scenes(std::vector<PointmapMetrics>{a});
  CHECK(one.accuracy.mean == a.accuracy.mean);

  std::mt19937_64 rng(8);
  std::vector<PointmapMetrics> many(9);
  for (auto& s : many) {
    s.accuracy = {uniform(rng, 0, 1), uniform(rng, 0, 1)};
    s.completeness = {uniform(rng, 0, 1), uniform(rng, 0, 1)};
  }
  const auto ref = aggregate_scenes(many);
  for (int k = 0; k < 20; ++k) {
    std::shuffle(many.begin(), many.end(), rng);
    const auto got = aggregate_scenes(many);
    CHECK(got.overall.mean == ref.overall.mean);
    CHECK(got.overall.median == ref.overall.median);
  }

  auto mixed = both;
  mixed[1].mode = PointmapMode::aligned;
  CHECK_THROWS_AS(aggregate_scenes(mixed), InvalidArgument);
  CHECK_THROWS_AS(aggregate_scenes(std::vector<PointmapMetrics>{}), InvalidArgument);
}
