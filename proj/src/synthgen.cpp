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

#include "slidedx/synthgen.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "slidedx/error.h"
#include "slidedx/parallel.h"
#include "slidedx/random.h"

namespace slidedx {

namespace {

// Hue in 1/1536 turns, saturation and value in 0..255.
struct TextureBase {
  int hue;
  int sat;
  int val;
};

// 0.95, 0.78 and 0.60 turns.
constexpr std::array<TextureBase, kNumClasses> kTextures = {
    TextureBase{1459, 150, 190}, TextureBase{1198, 160, 180},
    TextureBase{922, 155, 185}};

constexpr std::uint8_t kGlass[3] = {246, 244, 247};
constexpr int kGlassNoise = 2;

std::uint64_t pixel_hash(std::uint64_t seed, int x, int y, std::uint64_t salt) {
  return splitmix64(seed ^ splitmix64((static_cast<std::uint64_t>(y) << 32) ^
                                      static_cast<std::uint32_t>(x) ^ (salt << 56)));
}

int triangle(int t, int period) {
  const int m = t % period;
  const int half = period / 2;
  return m < half ? m : period - m;  // 0..half
}

// Brightness offset in -30..30 for each texture.
int texture_offset(ClassLabel label, int x, int y, std::uint64_t seed) {
  switch (label) {
    case ClassLabel::kNormal: {
      // slanted villus stripes
      const int t = triangle(x + y / 3, 40);
      return (t * 60) / 20 - 30;
    }
    case ClassLabel::kCeliac: {
      // flat blotches on a 32 px lattice
      const std::uint64_t h = pixel_hash(seed, x / 32, y / 32, 7);
      return static_cast<int>(h % 41) - 20;
    }
    case ClassLabel::kDuodenitis: {
      // inflammatory dots on a 24 px lattice
      const int dx = x % 24 - 12, dy = y % 24 - 12;
      return dx * dx + dy * dy <= 25 ? -30 : 10;
    }
  }
  return 0;
}

// Integer HSV to RGB, hue in [0,1536).
void hsv_to_rgb_fixed(int h, int s, int v, std::uint8_t out[3]) {
  h %= 1536;
  const int sector = h / 256;
  const int f = h % 256;
  const int p = v * (255 - s) / 255;
  const int q = v * (255 * 256 - s * f) / (255 * 256);
  const int t = v * (255 * 256 - s * (256 - f)) / (255 * 256);
  int r, g, b;
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  out[0] = static_cast<std::uint8_t>(r);
  out[1] = static_cast<std::uint8_t>(g);
  out[2] = static_cast<std::uint8_t>(b);
}

std::uint8_t clamp_byte(int v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
}

}  // namespace

void SlideSpec::validate() const {
  if (width < 1 || height < 1) throw ConfigError("slide dimensions must be positive");
  if (!(noise_amplitude >= 0.0 && noise_amplitude <= 0.5)) {
    throw ConfigError("noise amplitude must lie in [0, 0.5]");
  }
  if (regions.size() > 32000) throw ConfigError("too many regions");
  for (const Region& r : regions) {
    if (r.width < 1 || r.height < 1 || r.x < 0 || r.y < 0 ||
        r.x + r.width > width || r.y + r.height > height) {
      throw ConfigError("region (" + std::to_string(r.x) + "," + std::to_string(r.y) +
                        "," + std::to_string(r.width) + "x" +
                        std::to_string(r.height) + ") lies outside the slide");
    }
  }
}

std::optional<ClassLabel> SyntheticSlide::pixel_truth(int x, int y) const noexcept {
  const std::int16_t o = owner_[static_cast<std::size_t>(y) * image.width + x];
  if (o < 0) return std::nullopt;
  return spec_.regions[o].label;
}

ClassLabel SyntheticSlide::patch_truth(int x, int y, int size) const {
  if (x < 0 || y < 0 || x + size > image.width || y + size > image.height) {
    throw DataError("patch window outside the slide");
  }
  std::array<std::size_t, kNumClasses> count{};
  std::array<int, kNumClasses> last_region{-1, -1, -1};
  for (int yy = y; yy < y + size; ++yy) {
    const std::int16_t* row = owner_.data() + static_cast<std::size_t>(yy) * image.width;
    for (int xx = x; xx < x + size; ++xx) {
      const int o = row[xx];
      if (o < 0) continue;
      const std::size_t c = index_of(spec_.regions[o].label);
      ++count[c];
      last_region[c] = std::max(last_region[c], o);
    }
  }
  std::size_t best = kNumClasses;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (count[c] == 0) continue;
    if (best == kNumClasses || count[c] > count[best] ||
        (count[c] == count[best] && last_region[c] > last_region[best])) {
      best = c;
    }
  }
  return best == kNumClasses ? spec_.background_label : static_cast<ClassLabel>(best);
}

SyntheticSlide generate_slide(const SlideSpec& spec) {
  spec.validate();
  SyntheticSlide out;
  out.spec_ = spec;
  out.image = SlideImage(spec.id, spec.width, spec.height);
  out.owner_.assign(static_cast<std::size_t>(spec.width) * spec.height, -1);
  for (std::size_t r = 0; r < spec.regions.size(); ++r) {
    const Region& reg = spec.regions[r];
    for (int y = reg.y; y < reg.y + reg.height; ++y) {
      std::fill_n(out.owner_.begin() + static_cast<std::size_t>(y) * spec.width + reg.x,
                  reg.width, static_cast<std::int16_t>(r));
    }
  }

  const int amp = static_cast<int>(std::lround(spec.noise_amplitude * 255.0));
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      std::uint8_t* px = out.image.pixel(x, y);
      const std::uint64_t h = pixel_hash(spec.seed, x, y, 1);
      const int o = out.owner_[static_cast<std::size_t>(y) * spec.width + x];
      if (o < 0) {
        for (int c = 0; c < 3; ++c) {
          const int n = static_cast<int>((h >> (16 * c)) % (2 * kGlassNoise + 1)) -
                        kGlassNoise;
          px[c] = clamp_byte(kGlass[c] + n);
        }
        continue;
      }
      const ClassLabel label = spec.regions[o].label;
      const TextureBase& base = kTextures[index_of(label)];
      const int v = std::clamp(base.val + texture_offset(label, x, y, spec.seed), 0, 255);
      std::uint8_t rgb[3];
      hsv_to_rgb_fixed(base.hue, base.sat, v, rgb);
      for (int c = 0; c < 3; ++c) {
        const int n = amp == 0 ? 0
                               : static_cast<int>((h >> (16 * c)) % (2 * amp + 1)) - amp;
        px[c] = clamp_byte(rgb[c] + n);
      }
    }
  }
  return out;
}

std::vector<CorpusEntry> plan_corpus(const CorpusOptions& options) {
  if (options.per_class < 1) throw ConfigError("per-class slide count must be >= 1");
  if (options.width < kPatchSize || options.height < kPatchSize) {
    throw ConfigError("corpus slides must be at least 224 x 224");
  }
  std::vector<CorpusEntry> entries;
  int serial = 0;
  for (ClassLabel label : kAllClasses) {
    for (int i = 0; i < options.per_class; ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "S%04d", ++serial);
      CorpusEntry e;
      e.slide_id = id;
      e.label = label;
      e.seed = derive_seed(options.seed, e.slide_id);
      e.width = options.width;
      e.height = options.height;

      Rng rng(e.seed);
      const int W = options.width, H = options.height;
      // tissue block with 2-7% glass margins on every side
      const int ml = W * static_cast<int>(2 + rng.below(6)) / 100;
      const int mr = W * static_cast<int>(2 + rng.below(6)) / 100;
      const int mt = H * static_cast<int>(2 + rng.below(6)) / 100;
      const int mb = H * static_cast<int>(2 + rng.below(6)) / 100;
      const Region block{ml, mt, W - ml - mr, H - mt - mb, ClassLabel::kNormal};

      SlideSpec& s = e.spec;
      s.id = e.slide_id;
      s.width = W;
      s.height = H;
      s.noise_amplitude = options.noise_amplitude;
      s.seed = e.seed;
      s.background_label = ClassLabel::kNormal;
      switch (label) {
        case ClassLabel::kNormal:
          s.regions = {block};
          break;
        case ClassLabel::kCeliac: {
          Region celiac = block;
          celiac.label = ClassLabel::kCeliac;
          s.regions = {celiac};
          const int pct = static_cast<int>(rng.below(15));  // 0..14 %
          if (pct > 0) {
            Region strip = block;
            strip.height = std::max(1, block.height * pct / 100);
            strip.y = block.y + block.height - strip.height;
            s.regions.push_back(strip);
          }
          break;
        }
        case ClassLabel::kDuodenitis: {
          const int pct = 40 + static_cast<int>(rng.below(9));  // 40..48 %
          Region duo = block;
          duo.label = ClassLabel::kDuodenitis;
          duo.width = std::max(1, block.width * pct / 100);
          if (rng.below(2) == 1) duo.x = block.x + block.width - duo.width;
          s.regions = {block, duo};
          break;
        }
      }
      entries.push_back(std::move(e));
    }
  }
  return entries;
}

std::vector<SyntheticSlide> generate_corpus(std::span<const CorpusEntry> entries,
                                            int threads) {
  std::vector<SyntheticSlide> out(entries.size());
  parallel_for(entries.size(), threads,
               [&](std::size_t i) { out[i] = generate_slide(entries[i].spec); });
  return out;
}

}  // namespace slidedx
