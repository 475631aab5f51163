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

#include "slidedx/pixelops.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "slidedx/color.h"
#include "slidedx/error.h"
#include "slidedx/random.h"

namespace slidedx {

void ChannelStats::validate() const {
  for (int c = 0; c < 3; ++c) {
    if (!std::isfinite(mean[c]) || !std::isfinite(std[c]) || std[c] <= 0.0) {
      throw ConfigError("channel stats need finite means and positive stds");
    }
  }
}

void ChannelStatsAccumulator::add_pixel(std::uint8_t r, std::uint8_t g,
                                        std::uint8_t b) {
  ++count_;
  const double n = static_cast<double>(count_);
  const std::array<double, 3> x{r / 255.0, g / 255.0, b / 255.0};
  for (int c = 0; c < 3; ++c) {
    const double delta = x[c] - mean_[c];
    mean_[c] += delta / n;
    m2_[c] += delta * (x[c] - mean_[c]);
  }
}

void ChannelStatsAccumulator::add(const PatchPixels& patch) {
  const std::size_t n = static_cast<std::size_t>(patch.size) * patch.size;
  const std::uint8_t* p = patch.rgb.data();
  for (std::size_t i = 0; i < n; ++i, p += 3) add_pixel(p[0], p[1], p[2]);
}

void ChannelStatsAccumulator::merge(const ChannelStatsAccumulator& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const double na = static_cast<double>(count_);
  const double nb = static_cast<double>(other.count_);
  const double n = na + nb;
  for (int c = 0; c < 3; ++c) {
    const double delta = other.mean_[c] - mean_[c];
    mean_[c] += delta * nb / n;
    m2_[c] += other.m2_[c] + delta * delta * na * nb / n;
  }
  count_ += other.count_;
}

ChannelStats ChannelStatsAccumulator::finish() const {
  if (count_ == 0) throw DataError("channel statistics of an empty stream");
  ChannelStats out;
  for (int c = 0; c < 3; ++c) {
    out.mean[c] = mean_[c];
    const double var = std::max(0.0, m2_[c] / static_cast<double>(count_));
    out.std[c] = std::max(std::sqrt(var), kStdFloor);
  }
  return out;
}

ChannelStats compute_channel_stats(std::span<const PatchPixels> patches) {
  ChannelStatsAccumulator acc;
  for (const auto& p : patches) acc.add(p);
  return acc.finish();
}

PatchTensor normalize(const PatchPixels& patch, const ChannelStats& stats,
                      PatchRecord origin) {
  PatchTensor t;
  t.origin = std::move(origin);
  t.size = patch.size;
  const std::size_t plane = static_cast<std::size_t>(patch.size) * patch.size;
  t.chw.resize(plane * 3);
  // one table entry per byte value and channel
  std::array<std::array<float, 256>, 3> lut;
  for (int c = 0; c < 3; ++c) {
    const double scale = 1.0 / (255.0 * stats.std[c]);
    const double offset = stats.mean[c] / stats.std[c];
    for (int v = 0; v < 256; ++v) lut[c][v] = static_cast<float>(v * scale - offset);
  }
  const std::uint8_t* p = patch.rgb.data();
  float* r = t.chw.data();
  float* g = r + plane;
  float* b = g + plane;
  for (std::size_t i = 0; i < plane; ++i, p += 3) {
    r[i] = lut[0][p[0]];
    g[i] = lut[1][p[1]];
    b[i] = lut[2][p[2]];
  }
  return t;
}

std::vector<double> denormalize(const PatchTensor& tensor,
                                const ChannelStats& stats) {
  const std::size_t plane = static_cast<std::size_t>(tensor.size) * tensor.size;
  std::vector<double> out(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      out[i * 3 + c] =
          static_cast<double>(tensor.chw[c * plane + i]) * stats.std[c] +
          stats.mean[c];
    }
  }
  return out;
}

AugmentParams AugmentParams::identity() {
  AugmentParams p;
  p.brightness = {1.0, 1.0};
  p.contrast = {1.0, 1.0};
  p.saturation = {1.0, 1.0};
  p.hue = {0.0, 0.0};
  p.rotations = {0};
  p.flips = {Flip::kNone};
  return p;
}

void AugmentParams::validate() const {
  for (const Interval* f : {&brightness, &contrast, &saturation}) {
    if (!(f->lo <= f->hi) || !f->contains(1.0) || f->lo < 0.0) {
      throw ConfigError("jitter factor ranges must be ordered, non-negative "
                        "and contain 1.0");
    }
  }
  if (!(hue.lo <= hue.hi) || !hue.contains(0.0) || hue.lo < -0.5 ||
      hue.hi > 0.5) {
    throw ConfigError("hue range must lie in [-0.5, 0.5] and contain 0");
  }
  if (rotations.empty() || flips.empty()) {
    throw ConfigError("rotation and flip sets must be non-empty");
  }
  for (int r : rotations) {
    if (r % 90 != 0 || r < 0 || r >= 360) {
      throw ConfigError("rotations must be one of 0, 90, 180, 270");
    }
  }
}

AugmentDraw draw_augmentation(const AugmentParams& params, std::uint64_t seed) {
  params.validate();
  Rng rng(seed);
  AugmentDraw d;
  d.brightness = rng.uniform(params.brightness.lo, params.brightness.hi);
  d.contrast = rng.uniform(params.contrast.lo, params.contrast.hi);
  d.saturation = rng.uniform(params.saturation.lo, params.saturation.hi);
  d.hue = rng.uniform(params.hue.lo, params.hue.hi);
  d.rotation = params.rotations[rng.below(params.rotations.size())];
  d.flip = params.flips[rng.below(params.flips.size())];
  return d;
}

namespace {

void jitter_colors(PatchPixels& patch, const AugmentDraw& d) {
  const bool any = d.brightness != 1.0 || d.contrast != 1.0 ||
                   d.saturation != 1.0 || d.hue != 0.0;
  if (!any) return;

  const std::size_t n = static_cast<std::size_t>(patch.size) * patch.size;
  std::vector<double> px(n * 3);
  for (std::size_t i = 0; i < n * 3; ++i) px[i] = patch.rgb[i] / 255.0;

  if (d.brightness != 1.0) {
    for (double& v : px) v = std::clamp(v * d.brightness, 0.0, 1.0);
  }
  if (d.contrast != 1.0) {
    double mean_luma = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mean_luma += luminance(px[3 * i], px[3 * i + 1], px[3 * i + 2]);
    }
    mean_luma /= static_cast<double>(n);
    for (double& v : px) {
      v = std::clamp(mean_luma + d.contrast * (v - mean_luma), 0.0, 1.0);
    }
  }
  if (d.saturation != 1.0) {
    for (std::size_t i = 0; i < n; ++i) {
      double* p = &px[3 * i];
      const double gray = luminance(p[0], p[1], p[2]);
      for (int c = 0; c < 3; ++c) {
        p[c] = std::clamp(gray + d.saturation * (p[c] - gray), 0.0, 1.0);
      }
    }
  }
  if (d.hue != 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      double* p = &px[3 * i];
      Hsv hsv = rgb_to_hsv(p[0], p[1], p[2]);
      hsv.h += d.hue;
      const auto rgb = hsv_to_rgb(hsv);
      for (int c = 0; c < 3; ++c) p[c] = rgb[c];
    }
  }
  for (std::size_t i = 0; i < n * 3; ++i) patch.rgb[i] = to_byte(px[i]);
}

}  // namespace

PatchPixels rotate_quarter(const PatchPixels& patch, int quarter_turns) {
  const int turns = ((quarter_turns % 4) + 4) % 4;
  if (turns == 0) return patch;
  const int s = patch.size;
  PatchPixels out(s);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      int sx, sy;
      switch (turns) {
        case 1:  // counter-clockwise
          sx = s - 1 - y;
          sy = x;
          break;
        case 2:
          sx = s - 1 - x;
          sy = s - 1 - y;
          break;
        default:
          sx = y;
          sy = s - 1 - x;
          break;
      }
      const std::uint8_t* src = patch.pixel(sx, sy);
      std::uint8_t* dst = out.pixel(x, y);
      dst[0] = src[0];
      dst[1] = src[1];
      dst[2] = src[2];
    }
  }
  return out;
}

PatchPixels flip(const PatchPixels& patch, Flip mode) {
  if (mode == Flip::kNone) return patch;
  const int s = patch.size;
  PatchPixels out(s);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const int sx = mode == Flip::kHorizontal ? s - 1 - x : x;
      const int sy = mode == Flip::kVertical ? s - 1 - y : y;
      const std::uint8_t* src = patch.pixel(sx, sy);
      std::uint8_t* dst = out.pixel(x, y);
      dst[0] = src[0];
      dst[1] = src[1];
      dst[2] = src[2];
    }
  }
  return out;
}

PatchPixels apply_augmentation(const PatchPixels& patch, const AugmentDraw& d) {
  PatchPixels out = patch;
  jitter_colors(out, d);
  out = rotate_quarter(out, d.rotation / 90);
  return flip(out, d.flip);
}

PatchPixels augment(const PatchPixels& patch, const AugmentParams& params,
                    std::uint64_t seed) {
  return apply_augmentation(patch, draw_augmentation(params, seed));
}

std::size_t tissue_yield(std::span<const TissueIndex* const> slides,
                         const TileConfig& cfg) {
  std::size_t total = 0;
  for (const TissueIndex* s : slides) {
    if (s->width() < cfg.patch_size || s->height() < cfg.patch_size) continue;
    total += s->tissue_grid(cfg).size();
  }
  return total;
}

ExportPlan plan_export(std::span<const InventorySlide> inventory,
                       std::size_t target_per_class, const TileConfig& base,
                       std::uint64_t rng_seed) {
  base.validate();
  if (target_per_class == 0) throw ConfigError("target per class must be > 0");

  ExportPlan plan;
  plan.target_per_class = target_per_class;
  plan.rng_seed = rng_seed;

  for (ClassLabel label : kAllClasses) {
    std::vector<std::size_t> members;
    std::vector<const TissueIndex*> slides;
    for (std::size_t i = 0; i < inventory.size(); ++i) {
      if (inventory[i].label == label) {
        members.push_back(i);
        slides.push_back(&inventory[i].tissue);
      }
    }
    if (members.empty()) {
      throw DataError("no slides for class '" + std::string(to_string(label)) +
                      "'");
    }

    TileConfig cfg = base;
    ClassExportPlan cls;
    cls.base_yield = tissue_yield(slides, cfg);

    int chosen = 0;
    std::size_t chosen_yield = 0;
    for (int s = kMaxExportStride; s >= kMinExportStride; --s) {
      cfg.stride = s;
      const std::size_t y = tissue_yield(slides, cfg);
      if (y >= target_per_class) {
        chosen = s;
        chosen_yield = y;
        break;
      }
      if (s == kMinExportStride) chosen_yield = y;
    }
    if (chosen == 0) {
      if (chosen_yield == 0) {
        throw DataError("class '" + std::string(to_string(label)) +
                        "' has no tissue patch even at stride 16");
      }
      chosen = kMinExportStride;
      cls.with_replacement = true;
    }
    cls.stride = chosen;
    cls.yield = chosen_yield;

    cfg.stride = chosen;
    std::vector<ExportSelection> candidates;
    candidates.reserve(chosen_yield);
    for (std::size_t m = 0; m < members.size(); ++m) {
      if (slides[m]->width() < cfg.patch_size ||
          slides[m]->height() < cfg.patch_size) {
        continue;
      }
      for (const GridPoint& g : slides[m]->tissue_grid(cfg)) {
        candidates.push_back({members[m], g.x, g.y, 0});
      }
    }

    Rng rng(mix_seed(rng_seed, index_of(label)));
    std::vector<std::size_t> picks;
    if (!cls.with_replacement) {
      std::vector<std::size_t> order(candidates.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = 0; i < target_per_class; ++i) {
        const std::size_t j = i + rng.below(order.size() - i);
        std::swap(order[i], order[j]);
      }
      picks.assign(order.begin(), order.begin() + target_per_class);
    } else {
      picks.resize(target_per_class);
      for (auto& p : picks) p = rng.below(candidates.size());
    }
    std::sort(picks.begin(), picks.end());
    cls.selected.reserve(picks.size());
    for (std::size_t i = 0; i < picks.size(); ++i) {
      ExportSelection sel = candidates[picks[i]];
      sel.k = 0;
      if (i > 0 && picks[i] == picks[i - 1]) {
        sel.k = cls.selected.back().k + 1;
      }
      cls.selected.push_back(sel);
    }

    plan.per_class_stride[label] = chosen;
    plan.classes[label] = std::move(cls);
  }
  return plan;
}

}  // namespace slidedx
