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
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "slidedx/classifier.h"
#include "slidedx/color.h"
#include "slidedx/error.h"
#include "slidedx/onnx_model.h"
#include "slidedx/random.h"
#include "slidedx/synthgen.h"
#include "slidedx/tiler.h"
#include "slidedx/viz.h"

using namespace slidedx;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = SLIDEDX_FIXTURE_DIR;

PatchTensor random_tensor(Rng& rng, int x = 0, int y = 0) {
  PatchTensor t;
  t.origin = PatchRecord{"rand", x, y, kPatchSize, std::nullopt};
  t.chw.resize(3 * kPatchSize * kPatchSize);
  for (float& v : t.chw) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  return t;
}

PatchTensor fixture_input() {
  PatchTensor t;
  t.chw.resize(3 * kPatchSize * kPatchSize);
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < kPatchSize; ++i) {
      for (int j = 0; j < kPatchSize; ++j) {
        t.chw[(c * kPatchSize + i) * kPatchSize + j] =
            static_cast<float>(((c * 7 + i * 13 + j * 17) % 101) / 50.0 - 1.0);
      }
    }
  }
  return t;
}

/// name -> flat values, as frozen by make_onnx_fixture.py.
std::map<std::string, std::vector<double>> read_expected(const fs::path& file) {
  std::ifstream in(file);
  REQUIRE(in.good());
  std::map<std::string, std::vector<double>> out;
  std::string header, values;
  while (std::getline(in, header) && std::getline(in, values)) {
    std::istringstream hs(header), vs(values);
    std::string name;
    hs >> name;
    double v;
    while (vs >> v) out[name].push_back(v);
  }
  return out;
}

onnx::Tensor as_input(const PatchTensor& t) {
  onnx::Tensor x;
  x.shape = {1, 3, kPatchSize, kPatchSize};
  x.data = t.chw;
  return x;
}

std::vector<double> softmax(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> e(z.size());
  double s = 0;
  for (std::size_t i = 0; i < z.size(); ++i) s += e[i] = std::exp(z[i] - m);
  for (double& v : e) v /= s;
  return e;
}

fs::path temp_package(const std::string& name, const fs::path& graph_from,
                      const std::string& manifest) {
  const fs::path dir = fs::temp_directory_path() / ("slidedx_pkg_" + name);
  fs::create_directories(dir);
  fs::copy_file(graph_from, dir / "model.onnx", fs::copy_options::overwrite_existing);
  std::ofstream(dir / "model.manifest") << manifest;
  return dir;
}

}  // namespace

TEST_SUITE("classifier") {
  TEST_CASE("constant classifier ignores its input") {
    Rng rng(1);
    const ConstantClassifier c;
    for (int i = 0; i < 5; ++i) {
      const auto p = c.classify(random_tensor(rng));
      CHECK(p.values() == std::array<double, 3>{0.1, 0.8, 0.1});
    }
  }

  TEST_CASE("seeded hash classifier is a deterministic function of position") {
    Rng rng(2);
    const SeededHashClassifier c(17);
    const PatchTensor a = random_tensor(rng, 149, 298);
    PatchTensor b = random_tensor(rng, 149, 298);
    CHECK(c.classify(a) == c.classify(a));
    CHECK(c.classify(a) == c.classify(b));
    b.origin.x = 0;
    CHECK_FALSE(c.classify(a) == c.classify(b));
    CHECK_FALSE(SeededHashClassifier(18).classify(a) == c.classify(a));
  }

  TEST_CASE("seeded hash draws look uniform on the simplex") {
    // Dirichlet(1,1,1) marginals have mean 1/3 and P(argmax = c) = 1/3
    std::array<double, 3> mean{};
    std::array<int, 3> wins{};
    const int n = 30000;
    for (int i = 0; i < n; ++i) {
      const auto p = SeededHashClassifier::point(5, "s", i, 7);
      for (int c = 0; c < 3; ++c) mean[c] += p[c] / n;
      ++wins[index_of(canonical_argmax(p))];
    }
    for (int c = 0; c < 3; ++c) {
      CHECK(std::abs(mean[c] - 1.0 / 3) < 0.01);
      CHECK(std::abs(wins[c] / double(n) - 1.0 / 3) < 0.015);
    }
  }

  TEST_CASE("nearest prototype hue") {
    CHECK(HueHeuristicClassifier::nearest_class(0.95) == ClassLabel::kNormal);
    CHECK(HueHeuristicClassifier::nearest_class(0.02) == ClassLabel::kNormal);
    CHECK(HueHeuristicClassifier::nearest_class(0.78) == ClassLabel::kCeliac);
    CHECK(HueHeuristicClassifier::nearest_class(0.60) == ClassLabel::kDuodenitis);
    CHECK(HueHeuristicClassifier::nearest_class(0.40) == ClassLabel::kDuodenitis);
  }

  TEST_CASE("hue classifier labels generated celiac texture") {
    SlideSpec spec;
    spec.width = 2000;
    spec.height = 2000;
    spec.seed = 99;
    spec.regions = {{0, 0, 2000, 2000, ClassLabel::kCeliac}};
    const SyntheticSlide s = generate_slide(spec);
    const HueHeuristicClassifier clf;
    Rng rng(3);
    int correct = 0;
    for (int i = 0; i < 1000; ++i) {
      const int x = static_cast<int>(rng.below(2000 - 224 + 1));
      const int y = static_cast<int>(rng.below(2000 - 224 + 1));
      const auto p = clf.classify(normalize(copy_patch(s.image, x, y, 224), ChannelStats::unit()));
      correct += canonical_argmax(p) == ClassLabel::kCeliac;
    }
    CHECK(correct == 1000);
  }

  TEST_CASE("hue classifier undoes the normalization it is given") {
    ChannelStats st;
    st.mean = {0.6, 0.4, 0.55};
    st.std = {0.2, 0.25, 0.15};
    SlideSpec spec;
    spec.width = spec.height = 224;
    spec.regions = {{0, 0, 224, 224, ClassLabel::kDuodenitis}};
    const auto s = generate_slide(spec);
    const PatchPixels px = copy_patch(s.image, 0, 0, 224);
    const auto a = HueHeuristicClassifier(st).classify(normalize(px, st));
    const auto b = HueHeuristicClassifier().classify(normalize(px, ChannelStats::unit()));
    for (int c = 0; c < 3; ++c) CHECK(std::abs(a[c] - b[c]) < 1e-3);
    CHECK(canonical_argmax(a) == ClassLabel::kDuodenitis);
  }

  TEST_CASE("glass-only patch is uniform") {
    PatchPixels px(224);
    std::fill(px.rgb.begin(), px.rgb.end(), 250);
    const auto p = HueHeuristicClassifier().classify(normalize(px, ChannelStats::unit()));
    for (int c = 0; c < 3; ++c) CHECK(p[c] == doctest::Approx(1.0 / 3));
  }

  TEST_CASE("tiny convnet entry points agree") {
    Rng rng(4);
    const TinyConvNet net(7);
    for (int i = 0; i < 5; ++i) {
      const PatchTensor t = random_tensor(rng);
      const auto p = net.classify(t);
      const auto [q, bundle] = net.classify_with_features(t);
      for (int c = 0; c < 3; ++c) CHECK(std::abs(p[c] - q[c]) < 1e-6);
      CHECK(bundle.k == TinyConvNet::kStage2Channels);
      CHECK(bundle.h == 56);
      CHECK(bundle.w == 56);
    }
  }

  TEST_CASE("tiny convnet logits are the pooled class activation maps") {
    Rng rng(5);
    const TinyConvNet net(8);
    const PatchTensor t = random_tensor(rng);
    const auto [p, bundle] = net.classify_with_features(t);
    std::vector<double> logits;
    for (ClassLabel c : kAllClasses) {
      const auto m = cam_raw(bundle, c);
      logits.push_back(std::accumulate(m.begin(), m.end(), 0.0) / m.size() +
                       net.head_bias()[index_of(c)]);
    }
    const auto q = softmax(logits);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(p[c] - q[c]) < 1e-9);
  }

  TEST_CASE("batch classification equals single calls") {
    Rng rng(6);
    const TinyConvNet net(9);
    std::vector<PatchTensor> batch;
    for (int i = 0; i < 256; ++i) batch.push_back(random_tensor(rng, i, 0));
    const auto out = net.batch_classify(batch);
    REQUIRE(out.size() == 256);
    double worst = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto single = net.classify(batch[i]);
      for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(single[c] - out[i][c]));
    }
    CHECK(worst < 1e-6);

    const std::vector<PatchTensor> one{batch[3]};
    CHECK(net.batch_classify(one)[0] == net.classify(batch[3]));

    std::vector<std::size_t> perm(32);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::swap(perm[0], perm[9]);
    std::vector<PatchTensor> shuffled;
    for (std::size_t i : perm) shuffled.push_back(batch[i]);
    const auto sout = net.batch_classify(shuffled);
    for (std::size_t i = 0; i < perm.size(); ++i) CHECK(sout[i] == out[perm[i]]);
  }

  TEST_CASE("classifiers without feature maps refuse CAM requests") {
    Rng rng(7);
    CHECK_THROWS_AS(HueHeuristicClassifier().classify_with_features(random_tensor(rng)),
                    CapabilityError);
    CHECK_FALSE(ConstantClassifier().capability().provides_features);
  }

  TEST_CASE("factory resolves built-in names") {
    const auto stats = ChannelStats::unit();
    CHECK(make_classifier("builtin:hue", stats)->identity() == "builtin:hue");
    CHECK(make_classifier("builtin:tinycnn", stats, 3)->identity() == "builtin:tinycnn");
    CHECK(make_classifier("builtin:tinycnn", stats, 3)->content_hash() ==
          make_classifier("builtin:tinycnn", stats, 3)->content_hash());
    CHECK(make_classifier("builtin:tinycnn", stats, 3)->content_hash() !=
          make_classifier("builtin:tinycnn", stats, 4)->content_hash());
    CHECK_THROWS_AS(make_classifier("builtin:resnet", stats), ConfigError);
  }
}

TEST_SUITE("onnx interpreter") {
  TEST_CASE("conv backbone matches frozen onnxruntime outputs") {
    const auto graph = onnx::Graph::load_file((kFixtures / "cnn_logits" / "model.onnx").string());
    const auto expected = read_expected(kFixtures / "cnn_logits" / "expected.txt");
    const auto out = graph.run({{"input", as_input(fixture_input())}}, {"logits", "features"});
    const auto& logits = out.at("logits");
    const auto& feats = out.at("features");
    CHECK(logits.shape == std::vector<std::int64_t>{1, 3});
    CHECK(feats.shape == std::vector<std::int64_t>{1, 6, 28, 28});
    REQUIRE(feats.data.size() == expected.at("features").size());
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(std::abs(logits.data[i] - expected.at("logits")[i]) < 1e-4);
    }
    double worst = 0;
    for (std::size_t i = 0; i < feats.data.size(); ++i) {
      worst = std::max(worst, std::abs(feats.data[i] - expected.at("features")[i]));
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("pooling head with legacy softmax matches onnxruntime") {
    const auto graph = onnx::Graph::load_file((kFixtures / "mlp_probs" / "model.onnx").string());
    CHECK(graph.opset() == 11);
    const auto expected = read_expected(kFixtures / "mlp_probs" / "expected.txt");
    const auto out = graph.run({{"input", as_input(fixture_input())}}, {"probs"});
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(std::abs(out.at("probs").data[i] - expected.at("probs")[i]) < 1e-5);
    }
  }

  TEST_CASE("classifier boundary applies softmax and reorders classes") {
    const auto clf = OnnxClassifier::load((kFixtures / "cnn_logits").string());
    const auto expected = read_expected(kFixtures / "cnn_logits" / "expected.txt");
    const auto q = softmax(expected.at("logits"));  // model order celiac, normal, duodenitis
    const auto p = clf.classify(fixture_input());
    CHECK(std::abs(p[ClassLabel::kCeliac] - q[0]) < 1e-5);
    CHECK(std::abs(p[ClassLabel::kNormal] - q[1]) < 1e-5);
    CHECK(std::abs(p[ClassLabel::kDuodenitis] - q[2]) < 1e-5);
    CHECK(clf.capability().provides_features);
    CHECK(clf.content_hash().size() == 16);
  }

  TEST_CASE("onnx feature bundle reproduces the logits through CAM") {
    const auto clf = OnnxClassifier::load((kFixtures / "cnn_logits").string());
    const auto graph = onnx::Graph::load_file((kFixtures / "cnn_logits" / "model.onnx").string());
    const onnx::Tensor* bias = graph.initializer("head_b");
    REQUIRE(bias != nullptr);
    const auto [p, bundle] = clf.classify_with_features(fixture_input());
    CHECK(bundle.k == 6);
    std::vector<double> logits;
    const std::array<std::size_t, 3> model_index{1, 0, 2};  // canonical -> model output
    for (ClassLabel c : kAllClasses) {
      const auto m = cam_raw(bundle, c);
      logits.push_back(std::accumulate(m.begin(), m.end(), 0.0) / m.size() +
                       bias->data[model_index[index_of(c)]]);
    }
    const auto q = softmax(logits);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(p[c] - q[c]) < 1e-5);
  }

  TEST_CASE("probability packages pass through") {
    const auto clf = OnnxClassifier::load((kFixtures / "mlp_probs").string());
    const auto expected = read_expected(kFixtures / "mlp_probs" / "expected.txt");
    const auto p = clf.classify(fixture_input());
    for (int c = 0; c < 3; ++c) CHECK(std::abs(p[c] - expected.at("probs")[c]) < 1e-5);
    CHECK_FALSE(clf.capability().provides_features);
    CHECK_THROWS_AS(clf.classify_with_features(fixture_input()), CapabilityError);
  }

  TEST_CASE("unsupported operators fail at load time") {
    try {
      OnnxClassifier::load((kFixtures / "unsupported_op").string());
      FAIL("expected a ModelError");
    } catch (const ModelError& e) {
      CHECK(std::string(e.what()).find("LeakyRelu") != std::string::npos);
    }
  }

  TEST_CASE("outputs that are not probabilities violate the contract") {
    const fs::path dir = temp_package("logits_as_probs", kFixtures / "cnn_logits" / "model.onnx",
                                      "output = probabilities\noutput_name = logits\n");
    const auto clf = OnnxClassifier::load(dir.string());
    CHECK_THROWS_AS(clf.classify(fixture_input()), ModelError);
  }

  TEST_CASE("manifest errors name the problem") {
    CHECK_THROWS_AS(ModelManifest::parse("input_layout = 3x256x256\n", "m"), Error);
    CHECK_THROWS_AS(ModelManifest::parse("colour = blue\n", "m"), Error);
    CHECK_THROWS_AS(ModelManifest::parse("feature_tensor = f\n", "m"), Error);
    CHECK_THROWS_AS(ModelManifest::parse("class_order = normal,normal,celiac\n", "m"), Error);
    CHECK_THROWS_AS(ModelManifest::parse("output = scores\n", "m"), Error);
    const auto m = ModelManifest::parse("# comment\n\noutput = logits\n", "m");
    CHECK(m.output == OutputSemantics::kLogits);
    CHECK_THROWS_AS(OnnxClassifier::load("/nonexistent/model/dir"), Error);
  }
}
