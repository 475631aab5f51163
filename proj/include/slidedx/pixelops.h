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

/// @file pixelops.h
/// @brief Channel statistics, normalization, augmentation and training-set
/// export planning.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "slidedx/tiler.h"
#include "slidedx/types.h"

namespace slidedx {

inline constexpr double kStdFloor = 1e-6;

/// Per-channel mean and population standard deviation in [0,1] intensity
/// units.
struct ChannelStats {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> std{1.0, 1.0, 1.0};

  /// mean 0, std 1: normalization reduces to scaling by 1/255.
  static ChannelStats unit() { return {}; }
  void validate() const;
};

/// Single-pass Welford accumulator. Partial accumulators can be merged, so
/// the result does not depend on how the stream is split across workers.
class ChannelStatsAccumulator {
 public:
  void add(const PatchPixels& patch);
  void add_pixel(std::uint8_t r, std::uint8_t g, std::uint8_t b);
  void merge(const ChannelStatsAccumulator& other);

  std::uint64_t count() const noexcept { return count_; }

  /// Throws DataError when nothing was accumulated.
  ChannelStats finish() const;

 private:
  std::uint64_t count_ = 0;
  std::array<double, 3> mean_{};
  std::array<double, 3> m2_{};
};

ChannelStats compute_channel_stats(std::span<const PatchPixels> patches);

/// Normalized network input, channel-major (3 x size x size). Carries the
/// patch it was cut from so coordinate-aware classifiers can use it.
struct PatchTensor {
  PatchRecord origin;
  int size = kPatchSize;
  std::vector<float> chw;

  float at(int c, int y, int x) const noexcept {
    return chw[(static_cast<std::size_t>(c) * size + y) * size + x];
  }
};

/// out[c] = (in[c]/255 - mean[c]) / std[c]
PatchTensor normalize(const PatchPixels& patch, const ChannelStats& stats,
                      PatchRecord origin = {});

/// Inverse of normalize, in [0,1] intensity units (interleaved RGB).
std::vector<double> denormalize(const PatchTensor& tensor,
                                const ChannelStats& stats);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const noexcept { return lo <= v && v <= hi; }
};

enum class Flip : std::uint8_t { kNone, kHorizontal, kVertical };

struct AugmentParams {
  Interval brightness{0.8, 1.2};
  Interval contrast{0.8, 1.2};
  Interval saturation{0.8, 1.2};
  Interval hue{-0.05, 0.05};  // turns
  std::vector<int> rotations{0, 90, 180, 270};
  std::vector<Flip> flips{Flip::kNone, Flip::kHorizontal, Flip::kVertical};

  static AugmentParams identity();

  /// Every interval must contain the identity factor, rotations must be
  /// multiples of 90 and both choice sets non-empty.
  void validate() const;
};

/// Factors drawn for one augmentation call.
struct AugmentDraw {
  double brightness = 1.0;
  double contrast = 1.0;
  double saturation = 1.0;
  double hue = 0.0;
  int rotation = 0;
  Flip flip = Flip::kNone;
};

AugmentDraw draw_augmentation(const AugmentParams& params, std::uint64_t seed);

/// Brightness, contrast, saturation, hue, then rotation, then flip.
PatchPixels augment(const PatchPixels& patch, const AugmentParams& params,
                    std::uint64_t seed);
PatchPixels apply_augmentation(const PatchPixels& patch, const AugmentDraw& draw);

/// Counter-clockwise rotation by quarter_turns * 90 degrees.
PatchPixels rotate_quarter(const PatchPixels& patch, int quarter_turns);
PatchPixels flip(const PatchPixels& patch, Flip mode);

/// Slide available to the exporter: label inherited by every patch.
struct InventorySlide {
  ClassLabel label;
  TissueIndex tissue;
};

struct ExportSelection {
  std::size_t slide_index = 0;  // into the inventory
  int x = 0;
  int y = 0;
  int k = 0;  // repeat counter among identical (slide, x, y) draws
};

struct ClassExportPlan {
  int stride = 0;
  std::size_t yield = 0;          // tissue patches at `stride`
  std::size_t base_yield = 0;     // tissue patches at the base stride
  bool with_replacement = false;  // even the densest stride under-yields
  std::vector<ExportSelection> selected;
};

struct ExportPlan {
  std::size_t target_per_class = 80000;
  std::map<ClassLabel, int> per_class_stride;
  std::map<ClassLabel, ClassExportPlan> classes;
  std::uint64_t rng_seed = 0;
};

inline constexpr int kMinExportStride = 16;
inline constexpr int kMaxExportStride = 224;

/// Total tissue-patch yield of a set of slides at a given stride.
std::size_t tissue_yield(std::span<const TissueIndex* const> slides,
                         const TileConfig& cfg);

/// For each class, picks the largest stride in [16, 224] whose tissue yield
/// meets the target and subsamples to exactly target_per_class patches.
/// `base` supplies patch size, clamping, tissue threshold and the base
/// stride recorded for reference. Throws DataError when a class has no
/// slide or no tissue patch at stride 16.
ExportPlan plan_export(std::span<const InventorySlide> inventory,
                       std::size_t target_per_class, const TileConfig& base,
                       std::uint64_t rng_seed);

}  // namespace slidedx
