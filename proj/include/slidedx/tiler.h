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

/// @file tiler.h
/// @brief Sliding-window decomposition of a slide into fixed-size patches.
///
/// Positions along each axis are the multiples of the stride that keep the
/// window inside the slide. With edge clamping the last flush position
/// (extent - patch_size) is appended when missing, so margins are never
/// dropped. The grid is emitted row-major: y outer, x inner.
///
/// The default stride of 149 px makes horizontally adjacent windows share
/// one third of their area: 224 - floor(224 * 2/3) = 75 px of overlap.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "slidedx/types.h"

namespace slidedx {

inline constexpr int kDefaultStride = 149;

struct TileConfig {
  int patch_size = kPatchSize;
  int stride = kDefaultStride;
  bool clamp_edges = true;
  double min_tissue_fraction = 0.30;

  /// Throws ConfigError on stride outside [1, 4*patch_size], a non-positive
  /// patch size or a tissue fraction outside [0,1].
  void validate() const;
};

struct GridPoint {
  int x = 0;
  int y = 0;
  auto operator<=>(const GridPoint&) const = default;
};

/// Window offsets along one axis of length `extent`.
std::vector<int> axis_positions(int extent, const TileConfig& cfg);

/// Throws DataError when width or height is below the patch size.
std::vector<GridPoint> tile_grid(int width, int height, const TileConfig& cfg);

/// Owning copy of one square window, interleaved RGB.
struct PatchPixels {
  int size = kPatchSize;
  std::vector<std::uint8_t> rgb;

  PatchPixels() = default;
  explicit PatchPixels(int s)
      : size(s), rgb(static_cast<std::size_t>(s) * s * 3, 0) {}

  const std::uint8_t* pixel(int x, int y) const noexcept {
    return rgb.data() + (static_cast<std::size_t>(y) * size + x) * 3;
  }
  std::uint8_t* pixel(int x, int y) noexcept {
    return rgb.data() + (static_cast<std::size_t>(y) * size + x) * 3;
  }
  bool operator==(const PatchPixels&) const = default;
};

PatchPixels copy_patch(const SlideImage& slide, int x, int y, int size);

/// Fraction of pixels with saturation > 0.05 and value < 0.95.
double tissue_fraction(const PatchPixels& patch) noexcept;

struct TileCensus {
  std::size_t total = 0;
  std::size_t tissue = 0;
};

/// Streams the tissue-passing patches of `slide` in grid order.
TileCensus extract_patches(
    const SlideImage& slide, const TileConfig& cfg,
    const std::function<void(const PatchRecord&, const PatchPixels&)>& sink);

/// Per-pixel tissue mask as a summed-area table, so the tissue fraction of
/// any window is O(1). Used where many strides are evaluated on one slide.
class TissueIndex {
 public:
  explicit TissueIndex(const SlideImage& slide);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  const std::string& slide_id() const noexcept { return slide_id_; }

  /// Tissue pixel count inside [x, x+size) x [y, y+size).
  std::uint64_t tissue_pixels(int x, int y, int size) const noexcept;
  double fraction(int x, int y, int size) const noexcept;

  /// Grid positions at cfg.stride passing cfg.min_tissue_fraction.
  std::vector<GridPoint> tissue_grid(const TileConfig& cfg) const;

 private:
  std::string slide_id_;
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint32_t> table_;  // (width+1) x (height+1)
};

}  // namespace slidedx
