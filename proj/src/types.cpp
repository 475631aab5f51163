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

#include "slidedx/types.h"

#include <algorithm>
#include <cmath>

#include "slidedx/error.h"

namespace slidedx {

ClassLabel label_from_index(std::size_t index) {
  if (index >= kNumClasses) {
    throw DataError("class index out of range: " + std::to_string(index));
  }
  return static_cast<ClassLabel>(index);
}

std::string_view to_string(ClassLabel label) noexcept {
  switch (label) {
    case ClassLabel::kNormal:
      return "normal";
    case ClassLabel::kCeliac:
      return "celiac";
    case ClassLabel::kDuodenitis:
      return "duodenitis";
  }
  return "unknown";
}

std::optional<ClassLabel> parse_label(std::string_view name) noexcept {
  for (ClassLabel c : kAllClasses) {
    if (name == to_string(c)) return c;
  }
  return std::nullopt;
}

std::string_view to_string(const SlideLabel& label) noexcept {
  return label ? to_string(*label) : std::string_view("indeterminate");
}

ClassProbabilities::ClassProbabilities(std::array<double, kNumClasses> p)
    : p_(p) {
  double sum = 0.0;
  for (double v : p_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DataError("probability component outside [0,1]: " +
                      std::to_string(v));
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw DataError("probabilities do not sum to 1 (sum=" +
                    std::to_string(sum) + ")");
  }
}

ClassProbabilities ClassProbabilities::from_logits(
    std::span<const double> logits) {
  if (logits.size() != kNumClasses) {
    throw DataError("expected 3 logits, got " + std::to_string(logits.size()));
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::array<double, kNumClasses> e{};
  double total = 0.0;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (!std::isfinite(logits[i])) throw DataError("non-finite logit");
    e[i] = std::exp(logits[i] - peak);
    total += e[i];
  }
  for (double& v : e) v /= total;
  return ClassProbabilities(e);
}

ClassProbabilities ClassProbabilities::from_weights(
    std::array<double, kNumClasses> w) {
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DataError("class weights must be finite and non-negative");
    }
    total += v;
  }
  if (total <= 0.0) throw DataError("class weights sum to zero");
  for (double& v : w) v /= total;
  return ClassProbabilities(w);
}

ClassLabel canonical_argmax(std::span<const double, kNumClasses> values) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kNumClasses; ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<ClassLabel>(best);
}

ClassLabel canonical_argmax(const ClassProbabilities& probs) noexcept {
  return canonical_argmax(std::span<const double, kNumClasses>(probs.values()));
}

SlideImage::SlideImage(std::string slide_id, int w, int h)
    : id(std::move(slide_id)),
      width(w),
      height(h),
      pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, 0) {}

void SlideImage::validate_for_inference() const {
  if (width < kPatchSize || height < kPatchSize) {
    throw DataError("slide '" + id + "' is " + std::to_string(width) + "x" +
                    std::to_string(height) + "; inference needs at least " +
                    std::to_string(kPatchSize) + "x" +
                    std::to_string(kPatchSize));
  }
  if (pixels.size() !=
      static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
    throw DataError("slide '" + id + "' raster size does not match dimensions");
  }
}

PatchPrediction::PatchPrediction(PatchRecord record, ClassProbabilities p)
    : patch(std::move(record)),
      probs(p),
      argmax(canonical_argmax(p)),
      confidence(p[argmax]) {}

void InferenceThresholds::validate() const {
  for (double t : theta) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw ConfigError("threshold outside [0,1]: " + std::to_string(t));
    }
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ConfigError("gamma outside [0,1]: " + std::to_string(gamma));
  }
}

}  // namespace slidedx
