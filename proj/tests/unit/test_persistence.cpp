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


#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "slidedx/aggregator.h"
#include "slidedx/error.h"
#include "slidedx/image_io.h"
#include "slidedx/persistence.h"
#include "slidedx/random.h"
#include "slidedx/synthgen.h"

using namespace slidedx;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "slidedx_unit";
  fs::create_directories(dir);
  return dir / name;
}

PredictionCache random_cache(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  PredictionCache c;
  c.slide_id = "S0042";
  c.n_patches_total = n + 5;
  for (std::size_t i = 0; i < n; ++i) {
    const std::array<double, 3> logits{rng.uniform() * 8 - 4, rng.uniform() * 8 - 4,
                                       rng.uniform() * 8 - 4};
    c.predictions.emplace_back(
        PatchRecord{c.slide_id, static_cast<int>(i % 100) * 149,
                    static_cast<int>(i / 100) * 149, kPatchSize, std::nullopt},
        ClassProbabilities::from_logits(logits));
  }
  return c;
}

}  // namespace

TEST_SUITE("prediction cache") {
  TEST_CASE("ten thousand predictions round-trip") {
    const PredictionCache c = random_cache(10000, 1);
    const fs::path path = scratch("big.predictions.csv");
    save_predictions(path, c);
    const PredictionCache back = load_predictions(path);
    CHECK(back.slide_id == c.slide_id);
    CHECK(back.n_patches_total == c.n_patches_total);
    REQUIRE(back.predictions.size() == c.predictions.size());
    double worst = 0;
    for (std::size_t i = 0; i < c.predictions.size(); ++i) {
      CHECK(back.predictions[i].patch == c.predictions[i].patch);
      for (std::size_t k = 0; k < 3; ++k) {
        worst = std::max(worst, std::abs(back.predictions[i].probs.values()[k] -
                                         c.predictions[i].probs.values()[k]));
      }
    }
    CHECK(worst <= 1e-9);
    CHECK(format_predictions(back) == format_predictions(c));
  }

  TEST_CASE("an empty cache is header only") {
    PredictionCache c;
    c.slide_id = "empty";
    c.n_patches_total = 4;
    const std::string text = format_predictions(c);
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
    const PredictionCache back = parse_predictions(text, "mem");
    CHECK(back.predictions.empty());
    CHECK(back.n_patches_total == 4);
  }

  TEST_CASE("truncation is reported with its line number") {
    std::string text = format_predictions(random_cache(3, 2));
    text.resize(text.rfind(',') - 1);  // cut into the last row
    try {
      parse_predictions(text, "cut.csv");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 8);
      CHECK(std::string(e.what()).find("cut.csv:8") == 0);
    }
  }

  TEST_CASE("other versions and foreign files are rejected") {
    std::string text = format_predictions(random_cache(2, 3));
    std::string v2 = text;
    v2.replace(v2.find(" v1"), 3, " v2");
    CHECK_THROWS_AS(parse_predictions(v2, "v2"), DataError);
    try {
      parse_predictions(v2, "v2");
    } catch (const ParseError&) {
      FAIL("a version mismatch is not a syntax error");
    } catch (const DataError&) {
    }
    CHECK_THROWS_AS(parse_predictions("x,y\n1,2\n", "foreign"), ParseError);
    CHECK_THROWS_AS(parse_predictions("", "void"), ParseError);
    std::string bad = text;
    bad.replace(bad.rfind('\n', bad.size() - 2) + 1, std::string::npos, "0,0,0.9,0.9,0.9\n");
    CHECK_THROWS_AS(parse_predictions(bad, "sum"), ParseError);
  }
}

TEST_SUITE("slide report") {
  TEST_CASE("reports round-trip byte for byte") {
    SlideSpec spec;
    spec.id = "R1";
    spec.width = 900;
    spec.height = 700;
    spec.regions = {{0, 0, 900, 700, ClassLabel::kNormal},
                    {0, 0, 400, 700, ClassLabel::kDuodenitis}};
    const SyntheticSlide s = generate_slide(spec);
    HueHeuristicClassifier clf;
    const SlideReport r = infer_slide(s.image, clf, InferenceOptions{});
    const std::string text = format_report(r);
    const SlideReport back = parse_report(text, "mem");
    CHECK(back == r);
    CHECK(format_report(back) == text);
    const fs::path path = scratch("R1.report.json");
    save_report(path, r);
    CHECK(load_report(path) == r);
  }

  TEST_CASE("malformed reports are data errors") {
    CHECK_THROWS_AS(parse_report("{", "x"), DataError);
    CHECK_THROWS_AS(parse_report("{\"slide_id\": 3}", "x"), DataError);
  }
}

TEST_SUITE("small formats") {
  TEST_CASE("channel stats") {
    ChannelStats st;
    st.mean = {0.71, 0.52, 0.66};
    st.std = {0.12, 0.18, 0.09};
    const ChannelStats back = parse_channel_stats(format_channel_stats(st), "st");
    for (int c = 0; c < 3; ++c) {
      CHECK(back.mean[c] == doctest::Approx(st.mean[c]).epsilon(1e-12));
      CHECK(back.std[c] == doctest::Approx(st.std[c]).epsilon(1e-12));
    }
    CHECK(parse_channel_stats("# c\n\n0.5\n0.5\n0.5\n1\n 1\n1\n", "st").mean[0] == 0.5);
    CHECK_THROWS_AS(parse_channel_stats("0.5\n0.5\n", "st"), DataError);
    CHECK_THROWS_AS(parse_channel_stats("0.5\n0.5\n0.5\n0\n1\n1\n", "st"), DataError);
  }

  TEST_CASE("feature bundles") {
    FeatureBundle b;
    b.k = 2;
    b.h = 3;
    b.w = 4;
    Rng rng(5);
    for (int i = 0; i < 24; ++i) b.maps.push_back(rng.uniform() * 10 - 5);
    for (int i = 0; i < 6; ++i) b.weights.push_back(rng.uniform());
    const std::string bytes = encode_feature_bundle(b);
    CHECK(bytes.size() == 16 + 30 * 8);
    const FeatureBundle back = decode_feature_bundle(bytes, "fb");
    CHECK(back.k == 2);
    for (std::size_t i = 0; i < b.maps.size(); ++i) {
      CHECK(std::abs(back.maps[i] - b.maps[i]) < 1e-6);
    }
    CHECK(back.weights == b.weights);
    CHECK_THROWS_AS(decode_feature_bundle(bytes.substr(0, 40), "fb"), DataError);
  }

  TEST_CASE("corpus manifest") {
    CorpusOptions opt;
    opt.per_class = 2;
    opt.width = 500;
    opt.height = 400;
    const auto plan = plan_corpus(opt);
    const auto back = parse_corpus_manifest(format_corpus_manifest(plan), "m");
    REQUIRE(back.size() == plan.size());
    for (std::size_t i = 0; i < plan.size(); ++i) {
      CHECK(back[i].slide_id == plan[i].slide_id);
      CHECK(back[i].label == plan[i].label);
      CHECK(back[i].seed == plan[i].seed);
      CHECK(back[i].width == 500);
    }
    CHECK_THROWS_AS(parse_corpus_manifest("id,label\n", "m"), ParseError);
  }

  TEST_CASE("confusion counts in several spellings") {
    const ConfusionMatrix want =
        ConfusionMatrix::from_counts({{{65, 2, 11}, {1, 72, 7}, {5, 0, 49}}});
    CHECK(parse_confusion("65,2,11\n1,72,7\n5,0,49\n", "c").m == want.m);
    CHECK(parse_confusion("[[65, 2, 11],\n [1, 72, 7],\n [5, 0, 49]]\n", "c").m == want.m);
    CHECK(parse_confusion("65\t2\t11\n1 72 7\n5  0  49", "c").m == want.m);
    CHECK_THROWS_AS(parse_confusion("1,2\n3,4\n", "c"), ParseError);
    CHECK_THROWS_AS(parse_confusion("1,2,3\n4,5,6\n", "c"), ParseError);
  }

  TEST_CASE("reference labels by header name") {
    const auto refs =
        parse_reference_csv("label,notes,slide_id\nceliac,x,S1\nnormal,,S2\n", "r");
    REQUIRE(refs.size() == 2);
    CHECK(refs[0].first == "S1");
    CHECK(refs[0].second == ClassLabel::kCeliac);
    CHECK(refs[1].second == ClassLabel::kNormal);
    CHECK_THROWS_AS(parse_reference_csv("id,label\nS1,celiac\n", "r"), ParseError);
    CHECK_THROWS_AS(parse_reference_csv("slide_id,label\nS1,polyp\n", "r"), DataError);
  }

  TEST_CASE("metrics csv marks undefined values") {
    const auto rep = per_class_metrics(
        ConfusionMatrix::from_counts({{{5, 2, 0}, {0, 7, 0}, {0, 0, 0}}}));
    const std::string csv = format_metrics_csv(rep);
    CHECK(csv.find("NA") != std::string::npos);
    CHECK(csv.find("average") != std::string::npos);
  }
}

TEST_SUITE("png") {
  TEST_CASE("slides survive a write and read") {
    SlideSpec spec;
    spec.id = "P1";
    spec.width = 301;
    spec.height = 157;
    spec.regions = {{10, 10, 200, 100, ClassLabel::kCeliac}};
    const SyntheticSlide s = generate_slide(spec);
    const fs::path path = scratch("p1.png");
    write_png(path, s.image);
    const SlideImage back = read_png(path, "P1");
    CHECK(back.width == 301);
    CHECK(back.height == 157);
    CHECK(back.pixels == s.image.pixels);
    CHECK(back.id == "P1");
    write_png(scratch("p1b.png"), s.image);
    CHECK(read_file(path) == read_file(scratch("p1b.png")));
  }

  TEST_CASE("unreadable files are data errors") {
    write_file(scratch("junk.png"), "not a png");
    CHECK_THROWS_AS(read_png(scratch("junk.png"), "j"), DataError);
    CHECK_THROWS_AS(read_png(scratch("missing.png"), "j"), DataError);
  }
}
