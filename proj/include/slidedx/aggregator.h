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

/// @file aggregator.h
/// @brief Whole-slide inference: confidence filtering, the duodenitis gate
/// and majority voting over retained patch predictions.
///
/// Decision rule over the retained set R with per-class counts n_c:
///
///   R empty                      -> Indeterminate
///   n_duodenitis / |R| > gamma   -> Duodenitis   (strict inequality)
///   otherwise                    -> argmax_c n_c, ties Celiac > Duodenitis
///                                   > Normal

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "slidedx/classifier.h"
#include "slidedx/pixelops.h"
#include "slidedx/tiler.h"
#include "slidedx/types.h"

namespace slidedx {

using ClassCounts = std::array<std::size_t, kNumClasses>;

struct RetainedSet {
  std::vector<PatchPrediction> predictions;
  ClassCounts counts{0, 0, 0};

  std::size_t size() const noexcept { return predictions.size(); }
  bool empty() const noexcept { return predictions.empty(); }
};

/// Keeps predictions whose confidence reaches the threshold of their argmax
/// class. Order is preserved; thresholds are not range-checked.
RetainedSet filter_predictions(std::span<const PatchPrediction> preds,
                               const InferenceThresholds& thresholds);

/// True when prediction `p` survives `theta`.
bool is_retained(const PatchPrediction& p,
                 const std::array<double, kNumClasses>& theta) noexcept;

SlideLabel aggregate(const ClassCounts& counts, double gamma) noexcept;
SlideLabel aggregate(const RetainedSet& retained, double gamma) noexcept;

/// counts / |retained|. Throws DataError on an empty set.
std::array<double, kNumClasses> slide_scores(const RetainedSet& retained);

struct InferenceOptions {
  TileConfig tile;
  InferenceThresholds thresholds;
  ChannelStats stats = ChannelStats::unit();
  int threads = 1;
  std::size_t batch_size = 16;
};

/// Tiles, normalizes, classifies and aggregates one slide. Probabilities in
/// the report are rounded to 9 significant digits so that a report rebuilt
/// from a prediction cache is identical to the original.
SlideReport infer_slide(const SlideImage& slide, const PatchClassifier& classifier,
                        const InferenceOptions& options);

/// Rebuilds the report from already computed tissue-patch predictions.
SlideReport report_from_predictions(std::string slide_id,
                                    std::vector<PatchPrediction> predictions,
                                    std::size_t n_patches_total,
                                    const InferenceThresholds& thresholds);

/// Nearest double to the 9-significant-digit decimal rendering of v.
double round_sig9(double v);

}  // namespace slidedx
