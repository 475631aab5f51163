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

#include "slidedx/tiler.h"

#include <cstring>
#include <string>

#include "slidedx/color.h"
#include "slidedx/error.h"

namespace slidedx {

void TileConfig::validate() const {
  if (patch_size < 1) {
    throw ConfigError("patch size must be positive");
  }
  if (stride < 1 || stride > 4 * patch_size) {
    throw ConfigError("stride must lie in [1, " + std::to_string(4 * patch_size) +
                      "], got " + std::to_string(stride));
  }
  if (!(min_tissue_fraction >= 0.0 && min_tissue_fraction <= 1.0)) {
    throw ConfigError("min tissue fraction must lie in [0,1]");
  }
}

std::vector<int> axis_positions(int extent, const TileConfig& cfg) {
  std::vector<int> out;
  const int last = extent - cfg.patch_size;
  if (last < 0) return out;
  for (int p = 0; p <= last; p += cfg.stride) out.push_back(p);
  if (cfg.clamp_edges && out.back() != last) out.push_back(last);
  return out;
}

std::vector<GridPoint> tile_grid(int width, int height, const TileConfig& cfg) {
  cfg.validate();
  if (width < cfg.patch_size || height < cfg.patch_size) {
    throw DataError("image " + std::to_string(width) + "x" +
                    std::to_string(height) + " is smaller than one " +
                    std::to_string(cfg.patch_size) + " px patch");
  }
  const auto xs = axis_positions(width, cfg);
  const auto ys = axis_positions(height, cfg);
  std::vector<GridPoint> grid;
  grid.reserve(xs.size() * ys.size());
  for (int y : ys) {
    for (int x : xs) grid.push_back({x, y});
  }
  return grid;
}

PatchPixels copy_patch(const SlideImage& slide, int x, int y, int size) {
  PatchPixels out(size);
  const std::size_t row_bytes = static_cast<std::size_t>(size) * 3;
  for (int r = 0; r < size; ++r) {
    std::memcpy(out.pixel(0, r), slide.pixel(x, y + r), row_bytes);
  }
  return out;
}

double tissue_fraction(const PatchPixels& patch) noexcept {
  const std::size_t n = static_cast<std::size_t>(patch.size) * patch.size;
  if (n == 0) return 0.0;
  std::size_t tissue = 0;
  const std::uint8_t* p = patch.rgb.data();
  for (std::size_t i = 0; i < n; ++i, p += 3) {
    tissue += is_tissue_pixel(p[0], p[1], p[2]) ? 1 : 0;
  }
  return static_cast<double>(tissue) / static_cast<double>(n);
}

TileCensus extract_patches(
    const SlideImage& slide, const TileConfig& cfg,
    const std::function<void(const PatchRecord&, const PatchPixels&)>& sink) {
  const auto grid = tile_grid(slide.width, slide.height, cfg);
  TileCensus census;
  census.total = grid.size();
  for (const GridPoint& g : grid) {
    PatchPixels pixels = copy_patch(slide, g.x, g.y, cfg.patch_size);
    if (tissue_fraction(pixels) < cfg.min_tissue_fraction) continue;
    ++census.tissue;
    PatchRecord record{slide.id, g.x, g.y, cfg.patch_size, std::nullopt};
    sink(record, pixels);
  }
  return census;
}

TissueIndex::TissueIndex(const SlideImage& slide)
    : slide_id_(slide.id),
      width_(slide.width),
      height_(slide.height),
      table_(static_cast<std::size_t>(slide.width + 1) * (slide.height + 1), 0) {
  const std::size_t stride = static_cast<std::size_t>(width_) + 1;
  for (int y = 0; y < height_; ++y) {
    std::uint32_t row = 0;
    for (int x = 0; x < width_; ++x) {
      const std::uint8_t* p = slide.pixel(x, y);
      row += is_tissue_pixel(p[0], p[1], p[2]) ? 1 : 0;
      table_[(y + 1) * stride + (x + 1)] = table_[y * stride + (x + 1)] + row;
    }
  }
}

std::uint64_t TissueIndex::tissue_pixels(int x, int y, int size) const noexcept {
  const std::size_t stride = static_cast<std::size_t>(width_) + 1;
  const std::size_t x0 = x, y0 = y, x1 = x + size, y1 = y + size;
  return static_cast<std::uint64_t>(table_[y1 * stride + x1]) +
         table_[y0 * stride + x0] - table_[y0 * stride + x1] -
         table_[y1 * stride + x0];
}

double TissueIndex::fraction(int x, int y, int size) const noexcept {
  return static_cast<double>(tissue_pixels(x, y, size)) /
         (static_cast<double>(size) * size);
}

std::vector<GridPoint> TissueIndex::tissue_grid(const TileConfig& cfg) const {
  std::vector<GridPoint> out;
  for (const GridPoint& g : tile_grid(width_, height_, cfg)) {
    if (fraction(g.x, g.y, cfg.patch_size) >= cfg.min_tissue_fraction) {
      out.push_back(g);
    }
  }
  return out;
}

}  // namespace slidedx
