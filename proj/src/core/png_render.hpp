/*
 *  Copyright 2026 The VSMO Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/image.hpp"

namespace vsmo {

/// 8-bit grey levels: 255 * clamp((v - low) / (high - low), 0, 1), rounded.
std::vector<std::uint8_t> apply_window(const Image& image, double low, double high);

/// Lossless 8-bit greyscale PNG.
std::string encode_png_gray8(int width, int height, const std::vector<std::uint8_t>& pixels);

struct DecodedPng {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};
DecodedPng decode_png_gray8(const std::string& bytes);

}  // namespace vsmo
