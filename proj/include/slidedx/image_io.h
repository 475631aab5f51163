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


/// @file image_io.h
/// @brief PNG read and write for RGB rasters.

#pragma once

#include <filesystem>
#include <string>

#include "slidedx/types.h"
#include "slidedx/viz.h"

namespace slidedx {

/// Decodes any PNG as 8-bit RGB: palette and gray are expanded, alpha is
/// dropped, 16-bit samples are reduced. Throws DataError on failure.
SlideImage read_png(const std::filesystem::path& path, std::string slide_id);

/// Writes 8-bit RGB with fixed compression settings and no time chunk, so
/// equal rasters produce equal files.
void write_png(const std::filesystem::path& path, int width, int height,
               const std::uint8_t* rgb);

inline void write_png(const std::filesystem::path& path, const SlideImage& image) {
  write_png(path, image.width, image.height, image.pixels.data());
}
inline void write_png(const std::filesystem::path& path, const RgbImage& image) {
  write_png(path, image.width, image.height, image.rgb.data());
}

}  // namespace slidedx
