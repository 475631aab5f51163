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

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

namespace slidedx {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

/// Hue in turns [0,1), saturation and value in [0,1].
struct Hsv {
  double h = 0.0, s = 0.0, v = 0.0;
};

/// Tissue rule: saturation > 0.05 and value < 0.95. Evaluated in exact
/// integer arithmetic on 8-bit channels.
constexpr bool is_tissue_pixel(std::uint8_t r, std::uint8_t g,
                               std::uint8_t b) noexcept {
  const int hi = std::max({r, g, b});
  const int lo = std::min({r, g, b});
  // s = (hi-lo)/hi > 1/20 and v = hi/255 < 19/20
  return hi > 0 && 20 * (hi - lo) > hi && 20 * hi < 19 * 255;
}

inline Hsv rgb_to_hsv(double r, double g, double b) noexcept {
  const double hi = std::max({r, g, b});
  const double lo = std::min({r, g, b});
  const double d = hi - lo;
  Hsv out;
  out.v = hi;
  out.s = hi > 0.0 ? d / hi : 0.0;
  if (d <= 0.0) return out;
  double h;
  if (hi == r) {
    h = (g - b) / d;
    if (h < 0.0) h += 6.0;
  } else if (hi == g) {
    h = (b - r) / d + 2.0;
  } else {
    h = (r - g) / d + 4.0;
  }
  out.h = h / 6.0;
  if (out.h >= 1.0) out.h -= 1.0;
  return out;
}

inline std::array<double, 3> hsv_to_rgb(Hsv c) noexcept {
  double h = c.h - std::floor(c.h);
  h *= 6.0;
  const int sector = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = c.v * (1.0 - c.s);
  const double q = c.v * (1.0 - c.s * f);
  const double t = c.v * (1.0 - c.s * (1.0 - f));
  switch (sector) {
    case 0:
      return {c.v, t, p};
    case 1:
      return {q, c.v, p};
    case 2:
      return {p, c.v, t};
    case 3:
      return {p, q, c.v};
    case 4:
      return {t, p, c.v};
    default:
      return {c.v, p, q};
  }
}

/// Rec. 601 luma.
constexpr double luminance(double r, double g, double b) noexcept {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

inline std::uint8_t to_byte(double unit) noexcept {
  return static_cast<std::uint8_t>(
      std::lround(std::clamp(unit, 0.0, 1.0) * 255.0));
}

}  // namespace slidedx
