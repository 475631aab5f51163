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

#include "slidedx/aggregator.h"

#include <cstdio>
#include <cstdlib>
#include <optional>

#include "slidedx/error.h"
#include "slidedx/parallel.h"

namespace slidedx {

bool is_retained(const PatchPrediction& p,
                 const std::array<double, kNumClasses>& theta) noexcept {
  return p.confidence >= theta[index_of(p.argmax)];
}

RetainedSet filter_predictions(std::span<const PatchPrediction> preds,
                               const InferenceThresholds& thresholds) {
  RetainedSet out;
  for (const auto& p : preds) {
    if (!is_retained(p, thresholds.theta)) continue;
    out.predictions.push_back(p);
    ++out.counts[index_of(p.argmax)];
  }
  return out;
}

SlideLabel aggregate(const ClassCounts& counts, double gamma) noexcept {
  const std::size_t n = counts[0] + counts[1] + counts[2];
  if (n == 0) return std::nullopt;
  const double duodenitis_share =
      static_cast<double>(counts[index_of(ClassLabel::kDuodenitis)]) /
      static_cast<double>(n);
  if (duodenitis_share > gamma) return ClassLabel::kDuodenitis;

  // Disease classes win ties.
  constexpr std::array<ClassLabel, kNumClasses> kPriority = {
      ClassLabel::kCeliac, ClassLabel::kDuodenitis, ClassLabel::kNormal};
  ClassLabel best = kPriority[0];
  for (ClassLabel c : kPriority) {
    if (counts[index_of(c)] > counts[index_of(best)]) best = c;
  }
  return best;
}

SlideLabel aggregate(const RetainedSet& retained, double gamma) noexcept {
  return aggregate(retained.counts, gamma);
}

std::array<double, kNumClasses> slide_scores(const RetainedSet& retained) {
  if (retained.empty()) {
    throw DataError("slide scores are undefined for an empty retained set");
  }
  std::array<double, kNumClasses> s{};
  const double n = static_cast<double>(retained.size());
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    s[c] = static_cast<double>(retained.counts[c]) / n;
  }
  return s;
}

double round_sig9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return std::strtod(buf, nullptr);
}

namespace {

ClassProbabilities canonicalize(const ClassProbabilities& p) {
  return ClassProbabilities(
      {round_sig9(p[std::size_t{0}]), round_sig9(p[std::size_t{1}]),
       round_sig9(p[std::size_t{2}])});
}

}  // namespace

SlideReport report_from_predictions(std::string slide_id,
                                    std::vector<PatchPrediction> predictions,
                                    std::size_t n_patches_total,
                                    const InferenceThresholds& thresholds) {
  SlideReport r;
  r.slide_id = std::move(slide_id);
  r.n_patches_total = n_patches_total;
  r.n_patches_tissue = predictions.size();
  if (r.n_patches_tissue > r.n_patches_total) {
    throw DataError("slide '" + r.slide_id + "' has more tissue patches than "
                    "grid positions");
  }
  RetainedSet retained = filter_predictions(predictions, thresholds);
  r.n_patches_retained = retained.size();
  r.label = aggregate(retained, thresholds.gamma);
  if (!retained.empty()) r.scores = slide_scores(retained);
  r.retained.reserve(predictions.size());
  for (const auto& p : predictions) r.retained.push_back(is_retained(p, thresholds.theta));
  r.predictions = std::move(predictions);
  return r;
}

SlideReport infer_slide(const SlideImage& slide, const PatchClassifier& classifier,
                        const InferenceOptions& options) {
  options.tile.validate();
  options.stats.validate();
  slide.validate_for_inference();
  if (options.tile.patch_size != kPatchSize) {
    throw ConfigError("classifiers take 224 px patches");
  }

  const auto grid = tile_grid(slide.width, slide.height, options.tile);
  const std::size_t batch = std::max<std::size_t>(options.batch_size, 1);
  const std::size_t n_batches = (grid.size() + batch - 1) / batch;
  std::vector<std::optional<PatchPrediction>> slots(grid.size());

  parallel_for(n_batches, options.threads, [&](std::size_t b) {
    const std::size_t begin = b * batch;
    const std::size_t end = std::min(grid.size(), begin + batch);
    std::vector<PatchTensor> tensors;
    std::vector<std::size_t> where;
    for (std::size_t i = begin; i < end; ++i) {
      const GridPoint& g = grid[i];
      const PatchPixels px = copy_patch(slide, g.x, g.y, options.tile.patch_size);
      if (tissue_fraction(px) < options.tile.min_tissue_fraction) continue;
      PatchRecord rec{slide.id, g.x, g.y, options.tile.patch_size, std::nullopt};
      tensors.push_back(normalize(px, options.stats, std::move(rec)));
      where.push_back(i);
    }
    if (tensors.empty()) return;
    const auto probs = classifier.batch_classify(tensors);
    if (probs.size() != tensors.size()) {
      throw ModelError("classifier returned " + std::to_string(probs.size()) +
                       " results for a batch of " + std::to_string(tensors.size()));
    }
    for (std::size_t j = 0; j < where.size(); ++j) {
      slots[where[j]].emplace(std::move(tensors[j].origin), canonicalize(probs[j]));
    }
  });

  std::vector<PatchPrediction> predictions;
  for (auto& s : slots) {
    if (s) predictions.push_back(std::move(*s));
  }
  return report_from_predictions(slide.id, std::move(predictions), grid.size(),
                                 options.thresholds);
}

}  // namespace slidedx
