// Copyright 2026 The slidedx Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "slidedx/aggregator.h"
#include "slidedx/classifier.h"
#include "slidedx/error.h"
#include "slidedx/random.h"
#include "slidedx/synthgen.h"
#include "slidedx/tuner.h"

using namespace slidedx;

namespace {

PatchPrediction pred(ClassLabel label, double confidence, int x = 0, int y = 0) {
  std::array<double, 3> p;
  p.fill((1.0 - confidence) / 2.0);
  p[index_of(label)] = confidence;
  return PatchPrediction(PatchRecord{"s", x, y, kPatchSize, std::nullopt},
                         ClassProbabilities(p));
}

void add(std::vector<PatchPrediction>& v, ClassLabel label, double conf, int n) {
  for (int i = 0; i < n; ++i) v.push_back(pred(label, conf, static_cast<int>(v.size()), 0));
}

/// Straight transcription of the decision rule, used as the oracle.
SlideLabel brute_force_rule(const ClassCounts& n, double gamma) {
  const std::size_t total = n[0] + n[1] + n[2];
  if (total == 0) return std::nullopt;
  if (static_cast<double>(n[2]) / static_cast<double>(total) > gamma) {
    return ClassLabel::kDuodenitis;
  }
  // disease-first priority
  for (ClassLabel c : {ClassLabel::kCeliac, ClassLabel::kDuodenitis, ClassLabel::kNormal}) {
    bool best = true;
    for (ClassLabel o : kAllClasses) best = best && n[index_of(c)] >= n[index_of(o)];
    if (best) return c;
  }
  return std::nullopt;
}

constexpr auto N = ClassLabel::kNormal;
constexpr auto C = ClassLabel::kCeliac;
constexpr auto D = ClassLabel::kDuodenitis;

}  // namespace

TEST_SUITE("aggregator") {
  TEST_CASE("open thresholds keep everything, impossible ones nothing") {
    Rng rng(1);
    std::vector<PatchPrediction> v;
    for (int i = 0; i < 100; ++i) {
      v.push_back(pred(label_from_index(rng.below(3)), rng.uniform(0.34, 1.0), i));
    }
    InferenceThresholds open;
    open.theta = {0, 0, 0};
    CHECK(filter_predictions(v, open).size() == 100);
    InferenceThresholds shut;
    shut.theta = {1.01, 1.01, 1.01};
    CHECK(filter_predictions(v, shut).empty());
  }

  TEST_CASE("per-class cutoffs") {
    const std::vector<PatchPrediction> v{pred(N, 0.71), pred(C, 0.79), pred(D, 0.86)};
    const RetainedSet r = filter_predictions(v, InferenceThresholds::defaults());
    REQUIRE(r.size() == 2);
    CHECK(r.predictions[0].argmax == N);
    CHECK(r.predictions[1].argmax == D);
    CHECK(r.counts == ClassCounts{1, 0, 1});
  }

  TEST_CASE("confidence equal to the cutoff is retained") {
    const std::vector<PatchPrediction> v{pred(C, 0.8)};
    CHECK(filter_predictions(v, InferenceThresholds::defaults()).size() == 1);
  }

  TEST_CASE("raising a threshold never grows the retained set") {
    Rng rng(2);
    std::vector<PatchPrediction> v;
    for (int i = 0; i < 300; ++i) {
      v.push_back(pred(label_from_index(rng.below(3)), rng.uniform(0.34, 1.0), i));
    }
    for (int t = 0; t < 200; ++t) {
      InferenceThresholds a;
      for (double& x : a.theta) x = rng.uniform();
      InferenceThresholds b = a;
      b.theta[rng.below(3)] += rng.uniform(0.0, 0.3);
      CHECK(filter_predictions(v, b).size() <= filter_predictions(v, a).size());
    }
  }

  TEST_CASE("gate examples") {
    CHECK(aggregate(ClassCounts{70, 0, 30}, 0.25) == D);
    for (double g : {0.0, 0.25, 0.5, 0.99}) CHECK(aggregate(ClassCounts{0, 100, 0}, g) == C);
    CHECK(aggregate(ClassCounts{40, 40, 5}, 0.25) == C);
    CHECK(aggregate(ClassCounts{0, 0, 0}, 0.25) == std::nullopt);
  }

  TEST_CASE("gate uses a strict inequality") {
    CHECK(aggregate(ClassCounts{75, 0, 25}, 0.25) == N);
    CHECK(aggregate(ClassCounts{74, 0, 26}, 0.25) == D);
    CHECK(aggregate(ClassCounts{3, 0, 1}, 0.25) == N);
  }

  TEST_CASE("rule matches the brute-force oracle") {
    Rng rng(3);
    for (int t = 0; t < 20000; ++t) {
      const ClassCounts n{rng.below(12), rng.below(12), rng.below(12)};
      const double g = static_cast<double>(rng.below(11)) / 20.0;
      CHECK(aggregate(n, g) == brute_force_rule(n, g));
    }
  }

  TEST_CASE("label depends only on counts") {
    Rng rng(4);
    std::vector<PatchPrediction> v;
    add(v, N, 0.9, 30);
    add(v, C, 0.9, 30);
    add(v, D, 0.9, 12);
    InferenceThresholds th;
    const auto base = aggregate(filter_predictions(v, th), th.gamma);
    for (int t = 0; t < 20; ++t) {
      for (std::size_t i = v.size() - 1; i > 0; --i) std::swap(v[i], v[rng.below(i + 1)]);
      CHECK(aggregate(filter_predictions(v, th), th.gamma) == base);
    }
  }

  TEST_CASE("once the gate fires more duodenitis keeps it fired") {
    Rng rng(5);
    for (int t = 0; t < 2000; ++t) {
      ClassCounts n{rng.below(20), rng.below(20), rng.below(20)};
      const double g = rng.uniform(0.0, 0.6);
      if (aggregate(n, g) != D) continue;
      while (n[0] + n[1] > 0) {
        const std::size_t from = n[0] > 0 && (n[1] == 0 || rng.below(2) == 0) ? 0 : 1;
        --n[from];
        ++n[2];
        CHECK(aggregate(n, g) == D);
      }
    }
  }

  TEST_CASE("slide scores") {
    std::vector<PatchPrediction> v;
    add(v, N, 0.9, 70);
    add(v, D, 0.9, 30);
    const auto s = slide_scores(filter_predictions(v, InferenceThresholds::defaults()));
    CHECK(s[0] == doctest::Approx(0.7));
    CHECK(s[1] == 0.0);
    CHECK(s[2] == doctest::Approx(0.3));
    const std::vector<PatchPrediction> one{pred(C, 0.95)};
    CHECK(slide_scores(filter_predictions(one, InferenceThresholds::defaults())) ==
          std::array<double, 3>{0, 1, 0});
    CHECK_THROWS_AS(slide_scores(RetainedSet{}), DataError);
  }

  TEST_CASE("scores match a recount") {
    Rng rng(6);
    InferenceThresholds open;
    open.theta = {0, 0, 0};
    for (int t = 0; t < 1000; ++t) {
      std::vector<PatchPrediction> v;
      std::array<double, 3> count{};
      const int n = 1 + static_cast<int>(rng.below(40));
      for (int i = 0; i < n; ++i) {
        const ClassLabel l = label_from_index(rng.below(3));
        ++count[index_of(l)];
        v.push_back(pred(l, 0.8, i));
      }
      const auto s = slide_scores(filter_predictions(v, open));
      for (int c = 0; c < 3; ++c) CHECK(s[c] == count[c] / n);
    }
  }

  TEST_CASE("synthetic celiac slide is called celiac") {
    SlideSpec spec;
    spec.width = spec.height = 1000;
    spec.regions = {{0, 0, 1000, 1000, C}};
    const auto slide = generate_slide(spec);
    const HueHeuristicClassifier clf;
    const SlideReport r = infer_slide(slide.image, clf, InferenceOptions{});
    CHECK(r.label == C);
    CHECK(r.n_patches_total == 49);
    CHECK(r.n_patches_tissue == 49);
  }

  TEST_CASE("glass slide is indeterminate") {
    SlideSpec spec;
    spec.width = spec.height = 1000;
    const auto slide = generate_slide(spec);
    const SlideReport r = infer_slide(slide.image, HueHeuristicClassifier{}, InferenceOptions{});
    CHECK_FALSE(r.label.has_value());
    CHECK(r.n_patches_tissue == 0);
    CHECK(r.n_patches_retained == 0);
  }

  TEST_CASE("a 30% duodenitis region fires the gate") {
    SlideSpec spec;
    spec.width = spec.height = 1000;
    spec.regions = {{0, 0, 1000, 1000, N}, {0, 0, 300, 1000, D}};
    const auto slide = generate_slide(spec);
    const SlideReport r = infer_slide(slide.image, HueHeuristicClassifier{}, InferenceOptions{});
    CHECK(r.label == D);
    CHECK(r.scores[2] > 0.25);
  }

  TEST_CASE("reports do not depend on thread count or batch size") {
    CorpusOptions o;
    o.width = o.height = 1200;
    o.seed = 5;
    const auto entries = plan_corpus(o);
    const auto slide = generate_slide(entries[2].spec);
    const TinyConvNet net(1);
    InferenceOptions a;
    a.threads = 1;
    const SlideReport ra = infer_slide(slide.image, net, a);
    for (int threads : {2, 4, 8}) {
      InferenceOptions b;
      b.threads = threads;
      b.batch_size = static_cast<std::size_t>(threads) + 1;
      CHECK(infer_slide(slide.image, net, b) == ra);
    }
  }

  TEST_CASE("rebuilding from predictions reproduces the report") {
    SlideSpec spec;
    spec.width = spec.height = 1000;
    spec.regions = {{0, 0, 1000, 1000, N}, {0, 0, 300, 1000, D}};
    const auto slide = generate_slide(spec);
    const SlideReport r = infer_slide(slide.image, HueHeuristicClassifier{}, InferenceOptions{});
    CHECK(report_from_predictions(r.slide_id, r.predictions, r.n_patches_total,
                                  InferenceThresholds::defaults()) == r);
  }

  TEST_CASE("nine-digit rounding is idempotent") {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
      const double v = rng.uniform();
      const double r = round_sig9(v);
      CHECK(std::abs(r - v) <= 5e-10);
      CHECK(round_sig9(r) == r);
    }
  }
}

TEST_SUITE("tuner") {
  /// Slides that only (0.6, 0.6, 0.6) with gamma 0.25 classifies correctly.
  std::vector<DevSlide> planted(double duodenitis_fraction_high) {
    std::vector<DevSlide> dev;
    auto slide = [&](ClassLabel ref) -> std::vector<PatchPrediction>& {
      dev.push_back({"d" + std::to_string(dev.size()), ref, {}});
      return dev.back().predictions;
    };
    // each theta must be <= 0.6 ...
    add(slide(N), N, 0.61, 10);
    add(slide(C), C, 0.61, 10);
    add(slide(D), D, 0.61, 10);
    // ... and above 0.58
    {
      auto& v = slide(C);
      add(v, C, 0.9, 10);
      add(v, N, 0.58, 11);
    }
    {
      auto& v = slide(N);
      add(v, N, 0.9, 10);
      add(v, C, 0.58, 11);
    }
    {
      auto& v = slide(N);
      add(v, N, 0.9, 10);
      add(v, D, 0.58, 10);
    }
    // gamma must lie in [0.24, 0.26) and above 0.24 up to the second slide
    {
      auto& v = slide(D);
      const int d = static_cast<int>(std::lround(100 * duodenitis_fraction_high));
      add(v, N, 0.9, 100 - d);
      add(v, D, 0.9, d);
    }
    {
      auto& v = slide(N);
      add(v, N, 0.9, 76);
      add(v, D, 0.9, 24);
    }
    return dev;
  }

  double naive_objective(const std::vector<DevSlide>& dev, const InferenceThresholds& th) {
    std::vector<SlideLabel> predicted;
    std::vector<ClassLabel> reference;
    for (const auto& s : dev) {
      const RetainedSet r = filter_predictions(s.predictions, th);
      predicted.push_back(brute_force_rule(r.counts, th.gamma));
      reference.push_back(s.reference);
    }
    double acc = 0;
    for (ClassLabel c : kAllClasses) {
      int ok = 0;
      for (std::size_t i = 0; i < dev.size(); ++i) {
        ok += (predicted[i] == c) == (reference[i] == c);
      }
      acc += static_cast<double>(ok) / dev.size();
    }
    return acc / 3;
  }

  TEST_CASE("single-point grid returns that point") {
    const auto dev = planted(0.26);
    TuneGrid one{{0.7}, {0.25}};
    CHECK(grid_search(dev, one).best.theta == std::array<double, 3>{0.7, 0.7, 0.7});
    CHECK(grid_search(dev, one).table.size() == 1);
  }

  TEST_CASE("planted optimum is recovered exactly") {
    const auto dev = planted(0.26);
    const TuneResult r = grid_search(dev, TuneGrid::defaults(), 2);
    CHECK(r.best.theta == std::array<double, 3>{0.6, 0.6, 0.6});
    CHECK(r.best.gamma == 0.25);
    CHECK(r.objective_value == 1.0);
    const auto perfect = std::count_if(r.table.begin(), r.table.end(),
                                       [](const TuneEntry& e) { return e.objective == 1.0; });
    CHECK(perfect == 1);
    CHECK(naive_objective(dev, r.best) == r.objective_value);
  }

  TEST_CASE("co-optimal points resolve to the lexicographically smallest") {
    const auto dev = planted(0.36);  // gamma 0.25, 0.30 and 0.35 all work
    const TuneResult r = grid_search(dev, TuneGrid::defaults());
    const auto perfect = std::count_if(r.table.begin(), r.table.end(),
                                       [](const TuneEntry& e) { return e.objective == 1.0; });
    CHECK(perfect == 3);
    CHECK(r.best.gamma == 0.25);
    CHECK(r.best.theta == std::array<double, 3>{0.6, 0.6, 0.6});
  }

  TEST_CASE("table entries match naive re-evaluation") {
    Rng rng(8);
    std::vector<DevSlide> dev;
    for (int s = 0; s < 12; ++s) {
      DevSlide d{"r" + std::to_string(s), label_from_index(s % 3), {}};
      for (int i = 0; i < 30; ++i) {
        const ClassLabel l =
            rng.uniform() < 0.6 ? d.reference : label_from_index(rng.below(3));
        d.predictions.push_back(pred(l, rng.uniform(0.4, 1.0), i));
      }
      dev.push_back(std::move(d));
    }
    const TuneGrid grid{{0.5, 0.6, 0.7, 0.8}, {0.1, 0.25, 0.4}};
    const TuneResult r = grid_search(dev, grid, 3);
    REQUIRE(r.table.size() == grid.size());
    for (const TuneEntry& e : r.table) CHECK(naive_objective(dev, e.thresholds) == e.objective);
    CHECK(grid_search(dev, grid, 1).table.size() == r.table.size());
    for (const TuneEntry& e : r.table) CHECK(e.objective <= r.objective_value);
  }

  TEST_CASE("work grows linearly in grid size and dev patches") {
    const auto dev = planted(0.26);
    std::vector<DevSlide> twice = dev;
    for (auto& s : twice) {
      const auto copy = s.predictions;
      s.predictions.insert(s.predictions.end(), copy.begin(), copy.end());
    }
    const TuneGrid small{{0.5, 0.6}, {0.25}};
    const TuneGrid big{{0.5, 0.6, 0.7, 0.8}, {0.25, 0.3}};
    const auto a = grid_search(dev, small).operations;
    const auto b = grid_search(twice, small).operations;
    const auto c = grid_search(dev, big).operations;
    std::size_t patches = 0;
    for (const auto& s : dev) patches += s.predictions.size();
    CHECK(a == 8 * patches + 8 * dev.size());
    CHECK(b == 8 * 2 * patches + 8 * dev.size());
    CHECK(c == 64 * patches + 128 * dev.size());
  }

  TEST_CASE("missing class in the dev set is rejected") {
    std::vector<DevSlide> dev{{"a", N, {pred(N, 0.9)}}, {"b", C, {pred(C, 0.9)}}};
    CHECK_THROWS_AS(grid_search(dev, TuneGrid::defaults()), DataError);
    CHECK_THROWS_AS(grid_search(planted(0.26), TuneGrid{{0.6, 0.5}, {0.25}}), ConfigError);
  }
}
