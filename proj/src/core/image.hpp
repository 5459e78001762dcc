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

#include <cstddef>
#include <span>
#include <vector>

#include "core/common.hpp"

namespace vsmo {

/// Row-major 2D scalar field with a physical pixel size.
class Image {
 public:
  Image() = default;
  Image(int width, int height, double pixel_size_mm = 1.0, double fill = 0.0)
      : width_(width), height_(height), pixel_size_(pixel_size_mm) {
    require(width > 0 && height > 0, ErrorCode::invalid_parameter, "image dimensions must be positive");
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] double pixel_size() const noexcept { return pixel_size_; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] double& at(int x, int y) noexcept {
    return data_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)];
  }
  [[nodiscard]] double at(int x, int y) const noexcept {
    return data_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)];
  }
  [[nodiscard]] double at(Pixel p) const noexcept { return at(p.x, p.y); }

  [[nodiscard]] bool contains(Pixel p) const noexcept {
    return p.x >= 0 && p.y >= 0 && p.x < width_ && p.y < height_;
  }

  [[nodiscard]] std::span<double> data() noexcept { return data_; }
  [[nodiscard]] std::span<const double> data() const noexcept { return data_; }

  [[nodiscard]] double sum() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  double pixel_size_ = 1.0;
  std::vector<double> data_;
};

}  // namespace vsmo
