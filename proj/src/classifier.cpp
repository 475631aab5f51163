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

#include "slidedx/classifier.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <vector>

#include "slidedx/color.h"
#include "slidedx/error.h"
#include "slidedx/onnx_model.h"
#include "slidedx/random.h"

namespace slidedx {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

std::uint64_t hash_doubles(std::span<const double> values, std::uint64_t h) {
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    h = mix_seed(h, bits);
  }
  return h;
}

void check_tensor(const PatchTensor& t) {
  const std::size_t expected = static_cast<std::size_t>(t.size) * t.size * 3;
  if (t.size < 1 || t.chw.size() != expected) {
    throw ModelError("patch tensor must be 3x" + std::to_string(t.size) + "x" +
                     std::to_string(t.size));
  }
}

}  // namespace

void FeatureBundle::validate() const {
  if (k < 1 || h < 1 || w < 1 || h > kPatchSize || w > kPatchSize) {
    throw DataError("feature bundle needs K >= 1 and 1 <= h,w <= 224");
  }
  if (maps.size() != static_cast<std::size_t>(k) * h * w ||
      weights.size() != static_cast<std::size_t>(k) * kNumClasses) {
    throw DataError("feature bundle sizes disagree with its dimensions");
  }
}

std::pair<ClassProbabilities, FeatureBundle>
PatchClassifier::classify_with_features(const PatchTensor&) const {
  throw CapabilityError("classifier '" + identity() +
                        "' does not expose feature maps; CAM unavailable");
}

std::vector<ClassProbabilities> PatchClassifier::batch_classify(
    std::span<const PatchTensor> batch) const {
  std::vector<ClassProbabilities> out;
  out.reserve(batch.size());
  for (const auto& t : batch) out.push_back(classify(t));
  return out;
}

// --- constant --------------------------------------------------------------

ConstantClassifier::ConstantClassifier(ClassProbabilities output)
    : output_(output) {}

std::string ConstantClassifier::content_hash() const {
  return hex64(hash_doubles(output_.values(), fnv1a64("constant")));
}

ClassProbabilities ConstantClassifier::classify(const PatchTensor&) const {
  return output_;
}

// --- seeded hash -----------------------------------------------------------

std::string SeededHashClassifier::content_hash() const {
  return hex64(mix_seed(fnv1a64("hash"), seed_));
}

ClassProbabilities SeededHashClassifier::point(std::uint64_t seed,
                                               std::string_view slide_id, int x,
                                               int y) {
  std::uint64_t h = mix_seed(seed, fnv1a64(slide_id), static_cast<std::uint32_t>(x),
                             static_cast<std::uint32_t>(y));
  std::array<double, kNumClasses> e{};
  for (double& v : e) {
    h = splitmix64(h);
    // (0, 1]: never zero, so the log stays finite.
    const double u = (static_cast<double>(h >> 11) + 1.0) * 0x1.0p-53;
    v = -std::log(u);
  }
  return ClassProbabilities::from_weights(e);
}

ClassProbabilities SeededHashClassifier::classify(const PatchTensor& t) const {
  return point(seed_, t.origin.slide_id, t.origin.x, t.origin.y);
}

// --- hue heuristic ---------------------------------------------------------

HueHeuristicClassifier::HueHeuristicClassifier(ChannelStats stats)
    : stats_(stats) {
  stats_.validate();
}

std::string HueHeuristicClassifier::content_hash() const {
  std::uint64_t h = hash_doubles(kPrototypeHues, fnv1a64("hue"));
  h = hash_doubles(std::array<double, 1>{kSharpness}, h);
  h = hash_doubles(stats_.mean, h);
  return hex64(hash_doubles(stats_.std, h));
}

ClassLabel HueHeuristicClassifier::nearest_class(double hue) noexcept {
  std::size_t best = 0;
  double best_d = 2.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    double d = std::abs(hue - kPrototypeHues[c]);
    d = std::min(d, 1.0 - d);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return static_cast<ClassLabel>(best);
}

namespace {

// 0 for non-tissue, otherwise 1 + nearest class, indexed by r << 16 | g << 8 | b.
const std::vector<std::uint8_t>& hue_table() {
  static const std::vector<std::uint8_t> table = [] {
    std::vector<std::uint8_t> t(std::size_t{1} << 24);
    for (int r = 0; r < 256; ++r) {
      for (int g = 0; g < 256; ++g) {
        for (int b = 0; b < 256; ++b) {
          std::uint8_t v = 0;
          if (is_tissue_pixel(r, g, b)) {
            const Hsv hsv = rgb_to_hsv(r / 255.0, g / 255.0, b / 255.0);
            v = static_cast<std::uint8_t>(
                1 + index_of(HueHeuristicClassifier::nearest_class(hsv.h)));
          }
          t[(static_cast<std::size_t>(r) << 16) | (g << 8) | b] = v;
        }
      }
    }
    return t;
  }();
  return table;
}

}  // namespace

ClassProbabilities HueHeuristicClassifier::classify(const PatchTensor& t) const {
  check_tensor(t);
  const std::vector<std::uint8_t>& table = hue_table();
  const std::size_t plane = static_cast<std::size_t>(t.size) * t.size;
  // back to bytes: round(clamp(x * std + mean, 0, 1) * 255)
  std::array<double, 3> gain{}, bias{};
  for (int c = 0; c < 3; ++c) {
    gain[c] = stats_.std[c] * 255.0;
    bias[c] = stats_.mean[c] * 255.0 + 0.5;
  }
  auto byte = [](double v) {
    return static_cast<std::size_t>(std::clamp(v, 0.5, 255.5));
  };
  const float* r = t.chw.data();
  const float* g = r + plane;
  const float* b = g + plane;
  std::array<std::size_t, kNumClasses + 1> bins{};
  for (std::size_t i = 0; i < plane; ++i) {
    const std::size_t key = byte(r[i] * gain[0] + bias[0]) << 16 |
                            byte(g[i] * gain[1] + bias[1]) << 8 |
                            byte(b[i] * gain[2] + bias[2]);
    ++bins[table[key]];
  }
  const std::size_t tissue = bins[1] + bins[2] + bins[3];
  const std::array<double, kNumClasses> votes{static_cast<double>(bins[1]),
                                              static_cast<double>(bins[2]),
                                              static_cast<double>(bins[3])};
  if (tissue == 0) return ClassProbabilities({1.0 / 3, 1.0 / 3, 1.0 / 3});
  std::array<double, kNumClasses> logits{};
  const double total = static_cast<double>(tissue) + 1.5;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    logits[c] = kSharpness * (votes[c] + 0.5) / total;
  }
  return ClassProbabilities::from_logits(logits);
}

// --- tiny convnet ----------------------------------------------------------

namespace {

void fill_uniform(std::vector<double>& w, std::size_t n, double scale,
                  std::uint64_t& state) {
  w.resize(n);
  for (double& v : w) {
    state = splitmix64(state);
    v = (static_cast<double>(state >> 11) * 0x1.0p-53 - 0.5) * 2.0 * scale;
  }
}

// 3x3 convolution, stride 2, zero padding 1, followed by ReLU.
std::vector<double> conv3x3_s2_relu(const std::vector<double>& in, int cin,
                                    int size, const std::vector<double>& w,
                                    const std::vector<double>& b, int cout,
                                    int* out_size) {
  const int os = (size + 2 - 3) / 2 + 1;
  *out_size = os;
  std::vector<double> out(static_cast<std::size_t>(cout) * os * os);
  for (int o = 0; o < cout; ++o) {
    for (int oy = 0; oy < os; ++oy) {
      for (int ox = 0; ox < os; ++ox) {
        double acc = b[o];
        for (int i = 0; i < cin; ++i) {
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * 2 - 1 + ky;
            if (iy < 0 || iy >= size) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ox * 2 - 1 + kx;
              if (ix < 0 || ix >= size) continue;
              acc += w[((o * cin + i) * 3 + ky) * 3 + kx] *
                     in[(static_cast<std::size_t>(i) * size + iy) * size + ix];
            }
          }
        }
        out[(static_cast<std::size_t>(o) * os + oy) * os + ox] =
            std::max(acc, 0.0);
      }
    }
  }
  return out;
}

}  // namespace

TinyConvNet::TinyConvNet(std::uint64_t seed) : seed_(seed) {
  std::uint64_t state = mix_seed(seed, fnv1a64("tinycnn"));
  fill_uniform(conv1_w_, kStage1Channels * 3 * 9, 0.4, state);
  fill_uniform(conv1_b_, kStage1Channels, 0.1, state);
  fill_uniform(conv2_w_, kStage2Channels * kStage1Channels * 9, 0.3, state);
  fill_uniform(conv2_b_, kStage2Channels, 0.1, state);
  fill_uniform(head_w_, kNumClasses * kStage2Channels, 2.0, state);
  fill_uniform(head_b_, kNumClasses, 0.2, state);
}

std::string TinyConvNet::content_hash() const {
  std::uint64_t h = fnv1a64("tinycnn");
  for (const auto* v :
       {&conv1_w_, &conv1_b_, &conv2_w_, &conv2_b_, &head_w_, &head_b_}) {
    h = hash_doubles(*v, h);
  }
  return hex64(h);
}

std::pair<ClassProbabilities, FeatureBundle> TinyConvNet::forward(
    const PatchTensor& t) const {
  check_tensor(t);
  std::vector<double> x(t.chw.begin(), t.chw.end());
  int s1 = 0, s2 = 0;
  const auto a1 = conv3x3_s2_relu(x, 3, t.size, conv1_w_, conv1_b_,
                                  kStage1Channels, &s1);
  auto a2 = conv3x3_s2_relu(a1, kStage1Channels, s1, conv2_w_, conv2_b_,
                            kStage2Channels, &s2);

  const std::size_t plane = static_cast<std::size_t>(s2) * s2;
  std::array<double, kStage2Channels> pooled{};
  for (int k = 0; k < kStage2Channels; ++k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < plane; ++i) sum += a2[k * plane + i];
    pooled[k] = sum / static_cast<double>(plane);
  }
  std::array<double, kNumClasses> logits{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    double z = head_b_[c];
    for (int k = 0; k < kStage2Channels; ++k) {
      z += head_w_[c * kStage2Channels + k] * pooled[k];
    }
    logits[c] = z;
  }

  FeatureBundle bundle;
  bundle.k = kStage2Channels;
  bundle.h = s2;
  bundle.w = s2;
  bundle.maps = std::move(a2);
  bundle.weights.resize(kStage2Channels * kNumClasses);
  for (int k = 0; k < kStage2Channels; ++k) {
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      bundle.weights[k * kNumClasses + c] = head_w_[c * kStage2Channels + k];
    }
  }
  return {ClassProbabilities::from_logits(logits), std::move(bundle)};
}

ClassProbabilities TinyConvNet::classify(const PatchTensor& t) const {
  return forward(t).first;
}

std::pair<ClassProbabilities, FeatureBundle> TinyConvNet::classify_with_features(
    const PatchTensor& t) const {
  return forward(t);
}

// --- factory ---------------------------------------------------------------

std::unique_ptr<PatchClassifier> make_classifier(std::string_view spec,
                                                 const ChannelStats& stats,
                                                 std::uint64_t seed) {
  constexpr std::string_view kPrefix = "builtin:";
  if (spec.substr(0, kPrefix.size()) == kPrefix) {
    const std::string_view name = spec.substr(kPrefix.size());
    if (name == "constant") return std::make_unique<ConstantClassifier>();
    if (name == "hash") return std::make_unique<SeededHashClassifier>(seed);
    if (name == "hue") return std::make_unique<HueHeuristicClassifier>(stats);
    if (name == "tinycnn") return std::make_unique<TinyConvNet>(seed);
    throw ConfigError("unknown built-in classifier '" + std::string(name) +
                      "' (expected constant, hash, hue or tinycnn)");
  }
  return std::make_unique<OnnxClassifier>(OnnxClassifier::load(std::string(spec)));
}

}  // namespace slidedx
