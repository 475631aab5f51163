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

#include "slidedx/viz.h"

#include <algorithm>
#include <cmath>

#include "slidedx/error.h"

namespace slidedx {

void Palette::validate() const {
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    for (std::size_t j = i + 1; j < kNumClasses; ++j) {
      if (class_colors[i] == class_colors[j]) {
        throw ConfigError("palette class colors must be distinct");
      }
    }
  }
  if (dot_radius < 0) throw ConfigError("dot radius must be non-negative");
  if (gradient.size() < 2 || gradient.front().t != 0.0 || gradient.back().t != 1.0) {
    throw ConfigError("heatmap gradient must run from t=0 to t=1");
  }
  for (std::size_t i = 1; i < gradient.size(); ++i) {
    if (!(gradient[i].t > gradient[i - 1].t)) {
      throw ConfigError("heatmap gradient stops must be strictly ascending");
    }
  }
}

Rgb Palette::gradient_at(double t) const noexcept {
  t = std::clamp(t, 0.0, 1.0);
  std::size_t i = 1;
  while (i + 1 < gradient.size() && gradient[i].t < t) ++i;
  const ColorStop& a = gradient[i - 1];
  const ColorStop& b = gradient[i];
  const double f = (t - a.t) / (b.t - a.t);
  auto lerp = [f](std::uint8_t x, std::uint8_t y) {
    return static_cast<std::uint8_t>(std::lround(x + f * (static_cast<double>(y) - x)));
  };
  return {lerp(a.color.r, b.color.r), lerp(a.color.g, b.color.g),
          lerp(a.color.b, b.color.b)};
}

RgbImage downsample(const SlideImage& slide, int scale) {
  if (scale < 1) throw ConfigError("overlay scale must be >= 1");
  const int w = (slide.width + scale - 1) / scale;
  const int h = (slide.height + scale - 1) / scale;
  RgbImage out(w, h);
  if (scale == 1) {
    out.rgb = slide.pixels;
    return out;
  }
  for (int oy = 0; oy < h; ++oy) {
    for (int ox = 0; ox < w; ++ox) {
      const int x0 = ox * scale, y0 = oy * scale;
      const int x1 = std::min(slide.width, x0 + scale);
      const int y1 = std::min(slide.height, y0 + scale);
      std::uint64_t sum[3] = {0, 0, 0};
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const std::uint8_t* p = slide.pixel(x, y);
          sum[0] += p[0];
          sum[1] += p[1];
          sum[2] += p[2];
        }
      }
      const std::uint64_t n = static_cast<std::uint64_t>(x1 - x0) * (y1 - y0);
      out.set(ox, oy,
              {static_cast<std::uint8_t>((sum[0] + n / 2) / n),
               static_cast<std::uint8_t>((sum[1] + n / 2) / n),
               static_cast<std::uint8_t>((sum[2] + n / 2) / n)});
    }
  }
  return out;
}

RgbImage render_overlay(const SlideImage& slide, const RetainedSet& retained,
                        const Palette& palette, int scale) {
  palette.validate();
  for (const auto& p : retained.predictions) {
    if (p.patch.slide_id != slide.id) {
      throw DataError("prediction for slide '" + p.patch.slide_id +
                      "' cannot be drawn on slide '" + slide.id + "'");
    }
  }
  RgbImage out = downsample(slide, scale);
  const int r = palette.dot_radius;
  for (const auto& p : retained.predictions) {
    const double cx = (p.patch.x + p.patch.size / 2.0) / scale;
    const double cy = (p.patch.y + p.patch.size / 2.0) / scale;
    const Rgb color = palette.class_colors[index_of(p.argmax)];
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
    const int x1 = std::min(out.width - 1, static_cast<int>(std::ceil(cx + r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
    const int y1 = std::min(out.height - 1, static_cast<int>(std::ceil(cy + r)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - cx, dy = y - cy;
        if (dx * dx + dy * dy <= static_cast<double>(r) * r) out.set(x, y, color);
      }
    }
  }
  return out;
}

std::vector<double> cam_raw(const FeatureBundle& bundle, ClassLabel target) {
  bundle.validate();
  const std::size_t plane = static_cast<std::size_t>(bundle.h) * bundle.w;
  std::vector<double> m(plane, 0.0);
  for (int k = 0; k < bundle.k; ++k) {
    const double w = bundle.weight(k, target);
    const double* src = bundle.maps.data() + k * plane;
    for (std::size_t i = 0; i < plane; ++i) m[i] += w * src[i];
  }
  return m;
}

Heatmap cam(const FeatureBundle& bundle, ClassLabel target) {
  std::vector<double> m = cam_raw(bundle, target);
  const auto [mn, mx] = std::minmax_element(m.begin(), m.end());
  const double lo = *mn, range = *mx - *mn;
  for (double& v : m) v = range > 0.0 ? (v - lo) / range : 0.0;

  Heatmap heat;
  heat.values.resize(static_cast<std::size_t>(kPatchSize) * kPatchSize);
  const double sy = static_cast<double>(bundle.h) / kPatchSize;
  const double sx = static_cast<double>(bundle.w) / kPatchSize;
  auto src = [&](int x, int y) {
    return m[static_cast<std::size_t>(y) * bundle.w + x];
  };
  for (int y = 0; y < kPatchSize; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, bundle.h - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, bundle.h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < kPatchSize; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, bundle.w - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, bundle.w - 1);
      const double wx = fx - x0;
      const double top = src(x0, y0) * (1.0 - wx) + src(x1, y0) * wx;
      const double bottom = src(x0, y1) * (1.0 - wx) + src(x1, y1) * wx;
      heat.values[static_cast<std::size_t>(y) * kPatchSize + x] =
          std::clamp(top * (1.0 - wy) + bottom * wy, 0.0, 1.0);
    }
  }
  return heat;
}

RgbImage render_heatmap(const PatchPixels& patch, const Heatmap& heat,
                        const Palette& palette, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0,1]");
  if (heat.size != patch.size) {
    throw DataError("heatmap and patch sizes differ");
  }
  RgbImage out(patch.size, patch.size);
  for (int y = 0; y < patch.size; ++y) {
    for (int x = 0; x < patch.size; ++x) {
      const std::uint8_t* p = patch.pixel(x, y);
      const Rgb g = palette.gradient_at(heat.at(x, y));
      auto blend = [alpha](std::uint8_t a, std::uint8_t b) {
        return static_cast<std::uint8_t>(
            std::lround((1.0 - alpha) * a + alpha * b));
      };
      out.set(x, y, {blend(p[0], g.r), blend(p[1], g.g), blend(p[2], g.b)});
    }
  }
  return out;
}

}  // namespace slidedx
