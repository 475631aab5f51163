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

/// @file types.h
/// @brief Shared domain vocabulary: class labels, probabilities, slides,
/// patches, thresholds and slide reports.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace slidedx {

inline constexpr int kPatchSize = 224;
inline constexpr std::size_t kNumClasses = 3;

/// Slide / patch diagnosis. The underlying values are the canonical index
/// order used by every file format and every probability vector.
enum class ClassLabel : std::uint8_t {
  kNormal = 0,
  kCeliac = 1,
  kDuodenitis = 2,
};

inline constexpr std::array<ClassLabel, kNumClasses> kAllClasses = {
    ClassLabel::kNormal, ClassLabel::kCeliac, ClassLabel::kDuodenitis};

constexpr std::size_t index_of(ClassLabel label) noexcept {
  return static_cast<std::size_t>(label);
}

/// Throws DataError when index >= 3.
ClassLabel label_from_index(std::size_t index);

/// Canonical names: `normal`, `celiac`, `duodenitis`.
std::string_view to_string(ClassLabel label) noexcept;
std::optional<ClassLabel> parse_label(std::string_view name) noexcept;

/// A slide decision; nullopt means Indeterminate (no retained patch).
using SlideLabel = std::optional<ClassLabel>;

/// `indeterminate` for nullopt, otherwise the canonical class name.
std::string_view to_string(const SlideLabel& label) noexcept;

/// Probability vector over the three classes, validated on construction.
class ClassProbabilities {
 public:
  static constexpr double kSumTolerance = 1e-6;

  /// Throws DataError unless every component lies in [0,1] and the
  /// components sum to 1 within kSumTolerance.
  explicit ClassProbabilities(std::array<double, kNumClasses> p);

  /// Numerically stable softmax of raw scores.
  static ClassProbabilities from_logits(std::span<const double> logits);

  /// Rescales non-negative weights so they sum to one.
  static ClassProbabilities from_weights(std::array<double, kNumClasses> w);

  double operator[](ClassLabel c) const noexcept { return p_[index_of(c)]; }
  double operator[](std::size_t i) const noexcept { return p_[i]; }
  const std::array<double, kNumClasses>& values() const noexcept { return p_; }

  bool operator==(const ClassProbabilities&) const = default;

 private:
  std::array<double, kNumClasses> p_;
};

/// Index of the maximal component; ties go to the lowest index.
ClassLabel canonical_argmax(const ClassProbabilities& probs) noexcept;
ClassLabel canonical_argmax(std::span<const double, kNumClasses> values) noexcept;

/// 8-bit interleaved RGB raster.
struct SlideImage {
  std::string id;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 3 bytes per pixel
  std::optional<std::string> magnification_tag;

  SlideImage() = default;
  SlideImage(std::string slide_id, int w, int h);

  const std::uint8_t* pixel(int x, int y) const noexcept {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
  std::uint8_t* pixel(int x, int y) noexcept {
    return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }

  /// Throws DataError if the raster size disagrees with width/height or the
  /// slide is smaller than one patch.
  void validate_for_inference() const;
};

struct PatchRecord {
  std::string slide_id;
  int x = 0;
  int y = 0;
  int size = kPatchSize;
  std::optional<ClassLabel> truth;

  bool operator==(const PatchRecord&) const = default;
};

struct PatchPrediction {
  PatchRecord patch;
  ClassProbabilities probs;
  ClassLabel argmax;
  double confidence;

  PatchPrediction(PatchRecord record, ClassProbabilities p);

  bool operator==(const PatchPrediction&) const = default;
};

/// Per-class confidence cutoffs plus the duodenitis gate.
struct InferenceThresholds {
  std::array<double, kNumClasses> theta{0.7, 0.8, 0.85};
  double gamma = 0.25;

  /// The tuned operating point: 0.7 / 0.8 / 0.85 and gamma 0.25.
  static InferenceThresholds defaults() { return {}; }

  /// Throws ConfigError if any component is outside [0,1].
  void validate() const;

  bool operator==(const InferenceThresholds&) const = default;
};

struct SlideReport {
  std::string slide_id;
  SlideLabel label;
  std::array<double, kNumClasses> scores{0.0, 0.0, 0.0};
  std::size_t n_patches_total = 0;
  std::size_t n_patches_tissue = 0;
  std::size_t n_patches_retained = 0;
  /// Every tissue patch, in grid order.
  std::vector<PatchPrediction> predictions;
  /// Parallel to `predictions`.
  std::vector<bool> retained;

  bool operator==(const SlideReport&) const = default;
};

}  // namespace slidedx
