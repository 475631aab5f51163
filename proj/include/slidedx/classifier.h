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

/// @file classifier.h
/// @brief Patch classification boundary and the built-in classifiers.
///
/// Every backend returns ClassProbabilities, whose constructor enforces the
/// simplex contract; logit-producing backends pass through
/// ClassProbabilities::from_logits. Instances are immutable after
/// construction and safe to call concurrently.
///
/// Built-ins:
///   builtin:constant  fixed output, default (0.1, 0.8, 0.1)
///   builtin:hash      reproducible pseudo-random simplex point per
///                     (slide_id, x, y)
///   builtin:hue       per-pixel nearest-hue vote matched to synthgen
///                     textures
///   builtin:tinycnn   two conv stages + global average pool + linear head
///                     with fixed seeded weights; exposes CAM features

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "slidedx/pixelops.h"
#include "slidedx/types.h"

namespace slidedx {

struct ClassifierCapability {
  bool provides_features = false;
};

/// K feature maps of h x w plus a K x 3 class-weight matrix.
struct FeatureBundle {
  int k = 0;
  int h = 0;
  int w = 0;
  std::vector<double> maps;     // k * h * w, row-major per map
  std::vector<double> weights;  // k * 3, row k holds the weights of map k

  double map(int m, int y, int x) const noexcept {
    return maps[(static_cast<std::size_t>(m) * h + y) * w + x];
  }
  double weight(int m, ClassLabel c) const noexcept {
    return weights[static_cast<std::size_t>(m) * kNumClasses + index_of(c)];
  }

  /// Throws DataError unless k >= 1, 1 <= h,w <= 224 and sizes agree.
  void validate() const;

  bool operator==(const FeatureBundle&) const = default;
};

class PatchClassifier {
 public:
  virtual ~PatchClassifier() = default;

  /// Stable identity string, e.g. "builtin:hue" or a model directory.
  virtual std::string identity() const = 0;
  /// Hex digest of whatever determines the outputs (weights, parameters).
  virtual std::string content_hash() const = 0;
  virtual ClassifierCapability capability() const { return {}; }

  virtual ClassProbabilities classify(const PatchTensor& tensor) const = 0;

  /// Throws CapabilityError unless capability().provides_features.
  virtual std::pair<ClassProbabilities, FeatureBundle> classify_with_features(
      const PatchTensor& tensor) const;

  /// Elementwise identical to calling classify on each tensor.
  virtual std::vector<ClassProbabilities> batch_classify(
      std::span<const PatchTensor> batch) const;
};

class ConstantClassifier final : public PatchClassifier {
 public:
  explicit ConstantClassifier(
      ClassProbabilities output = ClassProbabilities({0.1, 0.8, 0.1}));

  std::string identity() const override { return "builtin:constant"; }
  std::string content_hash() const override;
  ClassProbabilities classify(const PatchTensor& tensor) const override;

 private:
  ClassProbabilities output_;
};

/// Maps (slide_id, x, y) to a uniform Dirichlet(1,1,1) draw. Ignores pixels.
class SeededHashClassifier final : public PatchClassifier {
 public:
  explicit SeededHashClassifier(std::uint64_t seed = 0) : seed_(seed) {}

  std::string identity() const override { return "builtin:hash"; }
  std::string content_hash() const override;
  ClassProbabilities classify(const PatchTensor& tensor) const override;

  static ClassProbabilities point(std::uint64_t seed, std::string_view slide_id,
                                  int x, int y);

 private:
  std::uint64_t seed_;
};

/// Assigns every tissue pixel to the class whose prototype hue is nearest
/// on the hue circle. With smoothed vote shares s_c = (votes_c + 0.5) /
/// (tissue + 1.5), the output is softmax(kSharpness * s), so a patch whose
/// majority class holds 60% of the pixels is already confident. Patches
/// without tissue pixels get the uniform distribution.
class HueHeuristicClassifier final : public PatchClassifier {
 public:
  static constexpr double kSharpness = 12.0;

  /// Prototype hues in turns, canonical class order.
  static constexpr std::array<double, kNumClasses> kPrototypeHues = {0.95, 0.78,
                                                                     0.60};

  explicit HueHeuristicClassifier(ChannelStats stats = ChannelStats::unit());

  std::string identity() const override { return "builtin:hue"; }
  std::string content_hash() const override;
  ClassProbabilities classify(const PatchTensor& tensor) const override;

  /// Nearest prototype for one hue value.
  static ClassLabel nearest_class(double hue) noexcept;

 private:
  ChannelStats stats_;
};

/// Fixed-weight test network: conv3x3/2 (3->4) ReLU, conv3x3/2 (4->8) ReLU,
/// global average pool, linear 8->3, softmax. The second conv output and the
/// transposed head weights form the CAM feature bundle.
class TinyConvNet final : public PatchClassifier {
 public:
  static constexpr int kStage1Channels = 4;
  static constexpr int kStage2Channels = 8;

  explicit TinyConvNet(std::uint64_t seed = 0);

  std::string identity() const override { return "builtin:tinycnn"; }
  std::string content_hash() const override;
  ClassifierCapability capability() const override { return {true}; }

  ClassProbabilities classify(const PatchTensor& tensor) const override;
  std::pair<ClassProbabilities, FeatureBundle> classify_with_features(
      const PatchTensor& tensor) const override;

  /// Logits = head_weight * pooled + head_bias; exposed for tests.
  const std::vector<double>& head_weight() const noexcept { return head_w_; }
  const std::vector<double>& head_bias() const noexcept { return head_b_; }

 private:
  std::pair<ClassProbabilities, FeatureBundle> forward(
      const PatchTensor& tensor) const;

  std::uint64_t seed_;
  std::vector<double> conv1_w_, conv1_b_;  // [4][3][3][3], [4]
  std::vector<double> conv2_w_, conv2_b_;  // [8][4][3][3], [8]
  std::vector<double> head_w_, head_b_;    // [3][8], [3]
};

/// Resolves `builtin:<name>` or a model package directory.
/// `stats` is forwarded to classifiers that need to undo normalization.
std::unique_ptr<PatchClassifier> make_classifier(std::string_view spec,
                                                 const ChannelStats& stats,
                                                 std::uint64_t seed = 0);

std::string hex64(std::uint64_t v);

}  // namespace slidedx
