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

/// @file viz.h
/// @brief Dot overlays of patch predictions and class activation heatmaps.

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "slidedx/aggregator.h"
#include "slidedx/classifier.h"
#include "slidedx/color.h"
#include "slidedx/tiler.h"
#include "slidedx/types.h"

namespace slidedx {

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  RgbImage() = default;
  RgbImage(int w, int h)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

  Rgb at(int x, int y) const noexcept {
    const std::uint8_t* p = rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) noexcept {
    std::uint8_t* p = rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }
  bool operator==(const RgbImage&) const = default;
};

struct ColorStop {
  double t;
  Rgb color;
};

struct Palette {
  std::array<Rgb, kNumClasses> class_colors{Rgb{0, 170, 0}, Rgb{220, 0, 0},
                                            Rgb{0, 70, 230}};
  int dot_radius = 12;
  /// Cool to hot, t ascending from 0 to 1.
  std::vector<ColorStop> gradient{{0.0, {0, 0, 160}},
                                  {0.25, {0, 120, 255}},
                                  {0.5, {0, 220, 120}},
                                  {0.75, {255, 220, 0}},
                                  {1.0, {230, 0, 0}}};

  /// Throws ConfigError on duplicate class colors, a negative radius or a
  /// gradient that does not span [0,1] in ascending order.
  void validate() const;

  Rgb gradient_at(double t) const noexcept;
};

/// Box-averaged downsample by an integer factor; partial edge blocks
/// average the pixels they contain.
RgbImage downsample(const SlideImage& slide, int scale);

/// One filled dot per retained patch at its center, colored by argmax class.
/// Throws DataError if a prediction belongs to another slide.
RgbImage render_overlay(const SlideImage& slide, const RetainedSet& retained,
                        const Palette& palette, int scale);

struct Heatmap {
  int size = kPatchSize;
  std::vector<double> values;  // size * size, row-major, in [0,1]

  double at(int x, int y) const noexcept {
    return values[static_cast<std::size_t>(y) * size + x];
  }
};

/// Class-weighted sum of the feature maps at native resolution.
std::vector<double> cam_raw(const FeatureBundle& bundle, ClassLabel target);

/// Min-max normalized to [0,1] (a constant map becomes all zeros), then
/// bilinearly upsampled to 224 x 224 with half-pixel centers.
Heatmap cam(const FeatureBundle& bundle, ClassLabel target);

/// out = (1 - alpha) * patch + alpha * gradient(heat)
RgbImage render_heatmap(const PatchPixels& patch, const Heatmap& heat,
                        const Palette& palette, double alpha = 0.5);

}  // namespace slidedx
