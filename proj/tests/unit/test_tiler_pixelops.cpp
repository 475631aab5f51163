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


#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "doctest.h"
#include "slidedx/error.h"
#include "slidedx/pixelops.h"
#include "slidedx/random.h"
#include "slidedx/tiler.h"

using namespace slidedx;

namespace {

SlideImage filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b,
                  std::string id = "slide") {
  SlideImage s(std::move(id), w, h);
  for (std::size_t i = 0; i < s.pixels.size(); i += 3) {
    s.pixels[i] = r;
    s.pixels[i + 1] = g;
    s.pixels[i + 2] = b;
  }
  return s;
}

PatchPixels random_patch(Rng& rng, int size = 8) {
  PatchPixels p(size);
  for (auto& v : p.rgb) v = static_cast<std::uint8_t>(rng.below(256));
  return p;
}

TileConfig unclamped(int stride) {
  TileConfig c;
  c.stride = stride;
  c.clamp_edges = false;
  return c;
}

}  // namespace

TEST_SUITE("tiler") {
  TEST_CASE("exact-fit slide has one window") {
    const auto g = tile_grid(224, 224, TileConfig{});
    REQUIRE(g.size() == 1);
    CHECK(g[0] == GridPoint{0, 0});
  }

  TEST_CASE("clamping appends the last window") {
    const auto g = tile_grid(448, 224, TileConfig{});
    REQUIRE(g.size() == 3);
    CHECK(g[0].x == 0);
    CHECK(g[1].x == 149);
    CHECK(g[2].x == 224);
    for (const auto& p : g) CHECK(p.y == 0);
  }

  TEST_CASE("1000 x 1000 at stride 149") {
    const auto g = tile_grid(1000, 1000, TileConfig{});
    CHECK(g.size() == 49);
    const std::vector<int> expect{0, 149, 298, 447, 596, 745, 776};
    CHECK(axis_positions(1000, TileConfig{}) == expect);
  }

  TEST_CASE("undersized slides and bad strides are rejected") {
    CHECK_THROWS_AS(tile_grid(223, 500, TileConfig{}), DataError);
    CHECK_THROWS_AS(tile_grid(500, 500, unclamped(0)), ConfigError);
  }

  TEST_CASE("grid is strictly increasing in row-major order") {
    Rng rng(1);
    for (int t = 0; t < 200; ++t) {
      const int w = 224 + static_cast<int>(rng.below(2000));
      const int h = 224 + static_cast<int>(rng.below(2000));
      TileConfig cfg;
      cfg.stride = 1 + static_cast<int>(rng.below(400));
      const auto g = tile_grid(w, h, cfg);
      for (std::size_t i = 1; i < g.size(); ++i) {
        const bool increasing =
            g[i - 1].y < g[i].y || (g[i - 1].y == g[i].y && g[i - 1].x < g[i].x);
        CHECK(increasing);
      }
      CHECK(g == tile_grid(w, h, cfg));
    }
  }

  TEST_CASE("doubling the stride never increases the count") {
    Rng rng(2);
    for (int t = 0; t < 500; ++t) {
      const int w = 224 + static_cast<int>(rng.below(3000));
      const int h = 224 + static_cast<int>(rng.below(3000));
      const int s = 1 + static_cast<int>(rng.below(400));
      for (bool clamp : {false, true}) {
        TileConfig a, b;
        a.stride = s;
        b.stride = 2 * s;
        a.clamp_edges = b.clamp_edges = clamp;
        CHECK(tile_grid(w, h, b).size() <= tile_grid(w, h, a).size());
      }
    }
  }

  TEST_CASE("tissue fraction examples") {
    PatchPixels white(224), tissue(224), half(224);
    std::fill(white.rgb.begin(), white.rgb.end(), 255);
    for (int y = 0; y < 224; ++y) {
      for (int x = 0; x < 224; ++x) {
        std::uint8_t* t = tissue.pixel(x, y);
        t[0] = 180;
        t[1] = 90;
        t[2] = 120;
        std::uint8_t* h = half.pixel(x, y);
        const bool left = x < 112;
        h[0] = left ? 180 : 255;
        h[1] = left ? 90 : 255;
        h[2] = left ? 120 : 255;
      }
    }
    CHECK(tissue_fraction(white) == 0.0);
    CHECK(tissue_fraction(tissue) == 1.0);
    CHECK(tissue_fraction(half) == 0.5);
  }

  TEST_CASE("white slide yields no tissue patch") {
    const SlideImage s = filled(1000, 1000, 255, 255, 255);
    std::size_t seen = 0;
    const auto census = extract_patches(s, TileConfig{},
                                        [&](const PatchRecord&, const PatchPixels&) { ++seen; });
    CHECK(census.total == 49);
    CHECK(census.tissue == 0);
    CHECK(seen == 0);
  }

  TEST_CASE("tissue slide yields every window") {
    const SlideImage s = filled(448, 224, 180, 90, 120);
    std::vector<PatchRecord> recs;
    const auto census = extract_patches(
        s, TileConfig{}, [&](const PatchRecord& r, const PatchPixels&) { recs.push_back(r); });
    CHECK(census.tissue == 3);
    REQUIRE(recs.size() == 3);
    CHECK(recs[2].x == 224);
    CHECK(recs[0].slide_id == "slide");
  }

  TEST_CASE("zero tissue threshold keeps the full grid") {
    const SlideImage s = filled(700, 500, 255, 255, 255);
    TileConfig cfg;
    cfg.min_tissue_fraction = 0.0;
    const auto census = extract_patches(s, cfg, [](const PatchRecord&, const PatchPixels&) {});
    CHECK(census.tissue == tile_grid(700, 500, cfg).size());
  }

  TEST_CASE("summed-area tissue index matches direct counting") {
    Rng rng(4);
    SlideImage s("mix", 300, 260);
    for (std::size_t i = 0; i < s.pixels.size(); ++i) {
      s.pixels[i] = static_cast<std::uint8_t>(rng.below(256));
    }
    const TissueIndex idx(s);
    for (int t = 0; t < 50; ++t) {
      const int size = 1 + static_cast<int>(rng.below(200));
      const int x = static_cast<int>(rng.below(300 - size + 1));
      const int y = static_cast<int>(rng.below(260 - size + 1));
      const PatchPixels p = copy_patch(s, x, y, size);
      CHECK(idx.fraction(x, y, size) == tissue_fraction(p));
    }
  }
}

TEST_SUITE("pixelops") {
  TEST_CASE("constant patch has floored std") {
    PatchPixels p(4);
    std::fill(p.rgb.begin(), p.rgb.end(), 0);
    std::vector<PatchPixels> patches{p};
    // 0.5 is not representable in 8 bits; black gives the same constant case
    const ChannelStats s = compute_channel_stats(patches);
    for (int c = 0; c < 3; ++c) {
      CHECK(s.mean[c] == 0.0);
      CHECK(s.std[c] == doctest::Approx(1e-6));
    }
  }

  TEST_CASE("black and white patches give mean and std one half") {
    PatchPixels black(4), white(4);
    std::fill(white.rgb.begin(), white.rgb.end(), 255);
    std::vector<PatchPixels> patches{black, white};
    const ChannelStats s = compute_channel_stats(patches);
    for (int c = 0; c < 3; ++c) {
      CHECK(s.mean[c] == doctest::Approx(0.5).epsilon(1e-15));
      CHECK(s.std[c] == doctest::Approx(0.5).epsilon(1e-15));
    }
  }

  TEST_CASE("stats match a two-pass oracle and do not depend on order") {
    Rng rng(6);
    std::vector<PatchPixels> patches;
    for (int i = 0; i < 10; ++i) patches.push_back(random_patch(rng, 16));
    std::array<double, 3> sum{}, sq{};
    std::size_t n = 0;
    for (const auto& p : patches) {
      for (std::size_t i = 0; i < p.rgb.size(); i += 3) {
        for (int c = 0; c < 3; ++c) sum[c] += p.rgb[i + c] / 255.0;
        ++n;
      }
    }
    std::array<double, 3> mean{};
    for (int c = 0; c < 3; ++c) mean[c] = sum[c] / n;
    for (const auto& p : patches) {
      for (std::size_t i = 0; i < p.rgb.size(); i += 3) {
        for (int c = 0; c < 3; ++c) {
          const double d = p.rgb[i + c] / 255.0 - mean[c];
          sq[c] += d * d;
        }
      }
    }
    const ChannelStats s = compute_channel_stats(patches);
    for (int c = 0; c < 3; ++c) {
      CHECK(std::abs(s.mean[c] - mean[c]) < 1e-9);
      CHECK(std::abs(s.std[c] - std::sqrt(sq[c] / n)) < 1e-9);
    }
    std::reverse(patches.begin(), patches.end());
    std::swap(patches[2], patches[7]);
    const ChannelStats r = compute_channel_stats(patches);
    ChannelStatsAccumulator a, b;
    for (std::size_t i = 0; i < patches.size(); ++i) (i < 3 ? a : b).add(patches[i]);
    a.merge(b);
    const ChannelStats m = a.finish();
    for (int c = 0; c < 3; ++c) {
      CHECK(std::abs(s.mean[c] - r.mean[c]) < 1e-9);
      CHECK(std::abs(s.std[c] - r.std[c]) < 1e-9);
      CHECK(std::abs(s.mean[c] - m.mean[c]) < 1e-9);
      CHECK(std::abs(s.std[c] - m.std[c]) < 1e-9);
    }
  }

  TEST_CASE("empty stream is an error") {
    CHECK_THROWS_AS(ChannelStatsAccumulator{}.finish(), DataError);
  }

  TEST_CASE("normalize centers and scales") {
    ChannelStats st;
    st.mean = {100 / 255.0, 50 / 255.0, 200 / 255.0};
    st.std = {20 / 255.0, 10 / 255.0, 5 / 255.0};
    PatchPixels p(1);
    p.rgb = {100, 50, 200};
    auto t = normalize(p, st);
    for (float v : t.chw) CHECK(std::abs(v) < 1e-6);
    p.rgb = {120, 60, 205};
    t = normalize(p, st);
    for (float v : t.chw) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
  }

  TEST_CASE("denormalize inverts normalize") {
    Rng rng(8);
    ChannelStats st;
    st.mean = {0.7, 0.5, 0.6};
    st.std = {0.15, 0.2, 0.1};
    const PatchPixels p = random_patch(rng, 32);
    const auto back = denormalize(normalize(p, st), st);
    for (std::size_t i = 0; i < back.size(); ++i) {
      CHECK(std::abs(back[i] - p.rgb[i] / 255.0) < 1e-6);
    }
  }

  TEST_CASE("identity augmentation is exact") {
    Rng rng(10);
    const PatchPixels p = random_patch(rng, 24);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      CHECK(augment(p, AugmentParams::identity(), seed).rgb == p.rgb);
    }
  }

  TEST_CASE("rotations form a cyclic group and flips are involutions") {
    Rng rng(12);
    const PatchPixels p = random_patch(rng, 9);
    CHECK(rotate_quarter(rotate_quarter(p, 2), 2).rgb == p.rgb);
    PatchPixels q = p;
    for (int i = 0; i < 4; ++i) q = rotate_quarter(q, 1);
    CHECK(q.rgb == p.rgb);
    CHECK(rotate_quarter(rotate_quarter(p, 1), 3).rgb == p.rgb);
    CHECK(rotate_quarter(p, 1).rgb != p.rgb);
    CHECK(flip(flip(p, Flip::kHorizontal), Flip::kHorizontal).rgb == p.rgb);
    CHECK(flip(flip(p, Flip::kVertical), Flip::kVertical).rgb == p.rgb);
    // a half turn is both flips
    CHECK(flip(flip(p, Flip::kHorizontal), Flip::kVertical).rgb == rotate_quarter(p, 2).rgb);
  }

  TEST_CASE("counter-clockwise quarter turn geometry") {
    PatchPixels p(3);
    p.pixel(2, 0)[0] = 77;  // top-right corner
    const PatchPixels r = rotate_quarter(p, 1);
    CHECK(r.pixel(0, 0)[0] == 77);  // moves to top-left
  }

  TEST_CASE("augmentation is deterministic per seed") {
    Rng rng(14);
    const PatchPixels p = random_patch(rng, 20);
    const AugmentParams params;
    CHECK(augment(p, params, 99).rgb == augment(p, params, 99).rgb);
    const auto a = draw_augmentation(params, 5), b = draw_augmentation(params, 5);
    CHECK(a.brightness == b.brightness);
    CHECK(a.rotation == b.rotation);
    CHECK(params.brightness.contains(a.brightness));
    CHECK(params.hue.contains(a.hue));
  }

  TEST_CASE("augmentation parameters are validated") {
    AugmentParams p;
    p.brightness = {1.1, 1.3};
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.rotations = {45};
    CHECK_THROWS_AS(p.validate(), ConfigError);
  }
}

TEST_SUITE("export planning") {
  // 974 = 224 + 750: 7 positions per axis at stride 149 but only 6 at 150
  TEST_CASE("exact target yield at the default stride") {
    const SlideImage s = filled(974, 974, 180, 90, 120);
    std::vector<InventorySlide> inv;
    for (ClassLabel l : kAllClasses) inv.push_back({l, TissueIndex(s)});
    const ExportPlan plan = plan_export(inv, 49, TileConfig{}, 1);
    for (ClassLabel l : kAllClasses) {
      const auto& c = plan.classes.at(l);
      CHECK(c.stride == 149);
      CHECK(c.yield == 49);
      CHECK_FALSE(c.with_replacement);
      std::set<std::pair<int, int>> unique;
      for (const auto& sel : c.selected) unique.insert({sel.x, sel.y});
      CHECK(unique.size() == 49);
    }
  }

  TEST_CASE("chosen stride is the largest feasible one") {
    const SlideImage a = filled(974, 974, 180, 90, 120);
    const SlideImage b = filled(1500, 700, 180, 90, 120);
    std::vector<InventorySlide> inv;
    for (ClassLabel l : kAllClasses) {
      inv.push_back({l, TissueIndex(a)});
      inv.push_back({l, TissueIndex(b)});
    }
    const std::size_t target = 60;
    const ExportPlan plan = plan_export(inv, target, TileConfig{}, 3);
    int expected = 0;
    for (int s = 224; s >= 16 && expected == 0; --s) {
      TileConfig cfg;
      cfg.stride = s;
      if (tile_grid(974, 974, cfg).size() + tile_grid(1500, 700, cfg).size() >= target) {
        expected = s;
      }
    }
    for (ClassLabel l : kAllClasses) {
      CHECK(plan.classes.at(l).stride == expected);
      CHECK(plan.classes.at(l).selected.size() == target);
    }
  }

  TEST_CASE("yield does not grow with the stride") {
    const SlideImage a = filled(1300, 900, 180, 90, 120);
    const TissueIndex idx(a);
    const TissueIndex* ptr = &idx;
    std::size_t prev = SIZE_MAX;
    for (int s = 16; s <= 224; ++s) {
      TileConfig cfg;
      cfg.stride = s;
      const std::size_t y = tissue_yield(std::span<const TissueIndex* const>(&ptr, 1), cfg);
      CHECK(y <= prev);
      prev = y;
    }
  }

  TEST_CASE("under-yielding class samples with replacement") {
    const SlideImage s = filled(224, 224, 180, 90, 120);
    std::vector<InventorySlide> inv;
    for (ClassLabel l : kAllClasses) inv.push_back({l, TissueIndex(s)});
    const ExportPlan plan = plan_export(inv, 5, TileConfig{}, 9);
    const auto& c = plan.classes.at(ClassLabel::kNormal);
    CHECK(c.with_replacement);
    CHECK(c.stride == 16);
    REQUIRE(c.selected.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(c.selected[i].k == static_cast<int>(i));
  }

  TEST_CASE("missing class and glass-only class are errors") {
    const SlideImage t = filled(300, 300, 180, 90, 120);
    const SlideImage w = filled(300, 300, 255, 255, 255);
    std::vector<InventorySlide> inv{{ClassLabel::kNormal, TissueIndex(t)},
                                    {ClassLabel::kCeliac, TissueIndex(t)}};
    CHECK_THROWS_AS(plan_export(inv, 3, TileConfig{}, 0), DataError);
    inv.push_back({ClassLabel::kDuodenitis, TissueIndex(w)});
    CHECK_THROWS_AS(plan_export(inv, 3, TileConfig{}, 0), DataError);
  }

  TEST_CASE("plans are reproducible") {
    const SlideImage s = filled(1200, 1200, 180, 90, 120);
    std::vector<InventorySlide> inv;
    for (ClassLabel l : kAllClasses) inv.push_back({l, TissueIndex(s)});
    const auto a = plan_export(inv, 20, TileConfig{}, 4);
    const auto b = plan_export(inv, 20, TileConfig{}, 4);
    for (ClassLabel l : kAllClasses) {
      const auto& x = a.classes.at(l).selected;
      const auto& y = b.classes.at(l).selected;
      REQUIRE(x.size() == y.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(x[i].x == y[i].x);
        CHECK(x[i].y == y[i].y);
      }
    }
  }
}
