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

/// @file synthgen.h
/// @brief Deterministic synthetic slides with known per-pixel ground truth.
///
/// Each class is painted as its own procedural texture at a fixed hue:
/// normal pink (0.95 turns, villus stripes), celiac purple (0.78, blotches),
/// duodenitis blue (0.60, dots). Texture only modulates brightness, so the
/// hue of every texel is the class hue before noise. Speckle noise is added
/// per channel with amplitude noise_amplitude * 255. Pixels outside every
/// region are near-white glass, which the tissue filter rejects.
///
/// All texture math is integer arithmetic over a hash of (seed, x, y), so
/// output is bit-identical across platforms.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slidedx/types.h"

namespace slidedx {

struct Region {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  ClassLabel label = ClassLabel::kNormal;
};

struct SlideSpec {
  std::string id = "synthetic";
  int width = 0;
  int height = 0;
  /// Painted in order; later regions overwrite earlier ones.
  std::vector<Region> regions;
  /// Truth for windows that contain no region pixel.
  ClassLabel background_label = ClassLabel::kNormal;
  double noise_amplitude = 0.05;
  std::uint64_t seed = 0;

  /// Throws ConfigError on empty dimensions, regions out of bounds or a
  /// noise amplitude outside [0, 0.5].
  void validate() const;
};

class SyntheticSlide {
 public:
  SlideImage image;

  /// Label of the region that painted (x, y), nullopt for glass.
  std::optional<ClassLabel> pixel_truth(int x, int y) const noexcept;

  /// Majority label among region-owned pixels of the window; ties go to the
  /// class of the region painted last; background_label if the window holds
  /// only glass.
  ClassLabel patch_truth(int x, int y, int size = kPatchSize) const;

  const SlideSpec& spec() const noexcept { return spec_; }

 private:
  friend SyntheticSlide generate_slide(const SlideSpec& spec);

  SlideSpec spec_;
  std::vector<std::int16_t> owner_;  // region index per pixel, -1 = glass
};

SyntheticSlide generate_slide(const SlideSpec& spec);

struct CorpusEntry {
  std::string slide_id;
  ClassLabel label;
  std::uint64_t seed = 0;
  int width = 0;
  int height = 0;
  SlideSpec spec;
};

struct CorpusOptions {
  int per_class = 1;
  int width = 2000;
  int height = 2000;
  double noise_amplitude = 0.05;
  std::uint64_t seed = 0;
};

/// Slide layouts for a corpus, normal slides first, then celiac, then
/// duodenitis. Normal slides are one normal tissue block; celiac slides are
/// celiac tissue with an optional normal strip under 15% of the block;
/// duodenitis slides are normal tissue with a duodenitis region covering 40
/// to 48% of the block.
std::vector<CorpusEntry> plan_corpus(const CorpusOptions& options);

/// Thread-parallel generation of every planned slide.
std::vector<SyntheticSlide> generate_corpus(std::span<const CorpusEntry> entries,
                                            int threads = 1);

}  // namespace slidedx
