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

#include <complex>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "core/image.hpp"

namespace vsmo {

/// Parameters of one 2D Gabor filter:
///   exp(-4 ln2 r^2 / Ws^2) * cos(2 pi fc (dx cos(theta) + dy sin(theta)) + phi)
struct GaborSpec {
  double width = 7.0;  // Ws, px
  double freq = 0.1;   // fc, cycles/px
  double theta = 0.0;  // rad, [0, pi)
  double phi = 0.0;    // rad, [0, 2 pi)

  void validate() const;
  /// Unnormalised filter value at offset (dx, dy) from the centre.
  [[nodiscard]] double evaluate(double dx, double dy) const noexcept;
  friend bool operator==(const GaborSpec&, const GaborSpec&) = default;
};

/// Odd support of ceil(4 Ws) + 1 (rounded up to odd).
int default_support(double width);

/// Samples the filter on a support x support grid centred at the midpoint.
Image gabor_kernel(const GaborSpec& spec, int support);

class FeatureBank {
 public:
  FeatureBank() = default;

  /// Appends a filter; duplicates are rejected.
  void add(const GaborSpec& spec, std::string label = {});

  [[nodiscard]] std::size_t size() const noexcept { return specs_.size(); }
  [[nodiscard]] bool empty() const noexcept { return specs_.empty(); }
  [[nodiscard]] const GaborSpec& spec(std::size_t i) const { return specs_.at(i); }
  [[nodiscard]] const std::string& label(std::size_t i) const { return labels_.at(i); }
  [[nodiscard]] const std::vector<GaborSpec>& specs() const noexcept { return specs_; }
  [[nodiscard]] int max_support() const;

  /// Bank restricted to `indices`, in that order.
  [[nodiscard]] FeatureBank subset(std::span<const int> indices) const;

  /// Versioned CSV text: header comment, column row, one row per filter.
  [[nodiscard]] std::string serialize() const;
  static FeatureBank parse(const std::string& text);
  [[nodiscard]] std::string hash() const;

  friend bool operator==(const FeatureBank&, const FeatureBank&) = default;

 private:
  std::vector<GaborSpec> specs_;
  std::vector<std::string> labels_;
};

std::string default_label(const GaborSpec& spec);

/// Cartesian product, width-major then freq, theta, phi (phi fastest).
FeatureBank build_bank(std::span<const double> widths, std::span<const double> freqs, std::span<const double> thetas,
                       std::span<const double> phis);

/// 2 widths x 3 frequencies x 4 orientations x 2 phases = 48 filters.
FeatureBank default_bank();

struct FeatureVector {
  std::vector<double> values;
  Pixel location;
};

/// Same-size cross-correlation of an image with a bank of kernels, using
/// zero padding. Whole maps go through FFTs; single locations are computed
/// directly from the kernel so a few samples never pay for a full map.
/// Immutable after construction and safe to share between threads.
class FeatureEngine {
 public:
  FeatureEngine(const FeatureBank& bank, int width, int height);
  ~FeatureEngine();
  FeatureEngine(const FeatureEngine&) = delete;
  FeatureEngine& operator=(const FeatureEngine&) = delete;

  [[nodiscard]] const FeatureBank& bank() const noexcept { return bank_; }
  [[nodiscard]] int width() const noexcept { return width_; }
  [[nodiscard]] int height() const noexcept { return height_; }
  [[nodiscard]] const Image& kernel(std::size_t k) const { return kernels_.at(k); }

  /// Full maps for the requested bank indices.
  [[nodiscard]] std::vector<Image> maps(const Image& image, std::span<const int> indices) const;
  [[nodiscard]] Image map(const Image& image, int index) const;

  /// sum_k weights[k] * map(indices[k]), computed with one inverse transform.
  [[nodiscard]] Image weighted_map(const Image& image, std::span<const int> indices,
                                   std::span<const double> weights) const;

  /// Feature values at one location for the requested indices.
  [[nodiscard]] std::vector<double> extract(const Image& image, Pixel location, std::span<const int> indices) const;
  [[nodiscard]] double extract_one(const Image& image, Pixel location, int index) const;

 private:
  struct Plan;
  void check_image(const Image& image) const;
  [[nodiscard]] std::vector<std::complex<double>> forward(const Image& image) const;
  [[nodiscard]] Image inverse(const std::vector<std::complex<double>>& spectrum) const;

  FeatureBank bank_;
  int width_;
  int height_;
  int padded_ = 0;
  std::vector<Image> kernels_;
  std::vector<std::vector<std::complex<double>>> spectra_;  // conj(FFT(kernel)), padded layout
  std::unique_ptr<Plan> plan_;
};

/// Cross-correlation of `image` with gabor_kernel(spec, default_support).
Image feature_map(const Image& image, const GaborSpec& spec);

/// Values of every bank filter's map at `location`.
FeatureVector extract_features(const Image& image, const FeatureBank& bank, Pixel location);

}  // namespace vsmo
