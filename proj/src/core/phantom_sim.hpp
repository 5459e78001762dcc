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

// Lumpy-background phantoms, Gaussian lesions and a single-pinhole imaging
// model (Gaussian aperture blur followed by Poisson counting noise).

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/image.hpp"

namespace vsmo {

struct PhantomSpec {
  int width = 128;
  int height = 128;
  double pixel_size = 2.4;  // mm
  double lump_mean = 50.0;
  double lump_fwhm = 28.2;    // px
  double lesion_fwhm = 9.4;   // px
  double lesion_amplitude = 2.5;
  double dc_offset = 1.0;
  /// Minimum distance (px) between a lesion centre and the image edge.
  /// Negative means "two lesion FWHMs".
  double lesion_margin = -1.0;

  void validate() const;
  [[nodiscard]] double margin() const noexcept { return lesion_margin < 0 ? 2.0 * lesion_fwhm : lesion_margin; }
  /// Inclusive integer range of admissible lesion centres along x / y.
  [[nodiscard]] int min_x() const noexcept;
  [[nodiscard]] int max_x() const noexcept;
  [[nodiscard]] int min_y() const noexcept;
  [[nodiscard]] int max_y() const noexcept;
  [[nodiscard]] bool admissible(Pixel p) const noexcept;
  /// Canonical text used for the spec hash in dataset sidecars.
  [[nodiscard]] std::string canonical() const;
};

struct PinholeSpec {
  double relative_diameter = 1.0;  // aperture FWHM / lesion FWHM
  double base_counts = 1.0e6;      // expected total counts at relative_diameter = 1
  bool poisson_noise = true;

  void validate() const;
  [[nodiscard]] std::string canonical() const;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct Case {
  std::string id;
  Image image;
  bool lesion_present = false;
  std::optional<Pixel> lesion_location;
  std::uint64_t seed = 0;
};

int sample_lump_count(double mean, Rng& rng);

/// dc_offset plus unit-peak Gaussian lumps at the given centres.
Image render_lumps(const PhantomSpec& spec, std::span<const Point2> centers);

Image generate_background(const PhantomSpec& spec, Rng& rng);

/// Returns background + lesion_amplitude * Gaussian(lesion_fwhm) at `location`.
Image insert_lesion(const Image& background, Pixel location, const PhantomSpec& spec);

/// Separable, zero-padded convolution with a unit-sum sampled Gaussian.
Image gaussian_blur(const Image& image, double sigma);

/// Aperture blur (FWHM = relative_diameter * lesion_fwhm), scaling to an
/// expected total of base_counts * relative_diameter^2, then Poisson noise.
Image image_pinhole(const Image& phantom, const PinholeSpec& pinhole, double lesion_fwhm, Rng& rng);

/// One case generated entirely from `seed`.
Case generate_case(const PhantomSpec& spec, const PinholeSpec& pinhole, bool lesion_present, std::uint64_t seed);

/// n_present lesion-present cases followed by n_absent lesion-absent cases.
/// Case i draws from derive_seed(master_seed, i).
std::vector<Case> generate_dataset(const PhantomSpec& spec, const PinholeSpec& pinhole, int n_present, int n_absent,
                                   std::uint64_t master_seed, int threads = 1);

}  // namespace vsmo
