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

#include "core/phantom_sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "core/parallel.hpp"

namespace vsmo {

void PhantomSpec::validate() const {
  require(width > 0 && height > 0, ErrorCode::invalid_parameter, "phantom dimensions must be positive");
  require(pixel_size > 0, ErrorCode::invalid_parameter, "pixel_size must be positive");
  require(lump_mean > 0, ErrorCode::invalid_parameter, "lump_mean must be positive");
  require(lump_fwhm > 0 && lesion_fwhm > 0, ErrorCode::invalid_parameter, "FWHM values must be positive");
  require(std::isfinite(lesion_amplitude) && std::isfinite(dc_offset), ErrorCode::invalid_parameter,
          "lesion_amplitude and dc_offset must be finite");
  require(min_x() <= max_x() && min_y() <= max_y(), ErrorCode::invalid_parameter,
          "lesion margin leaves no admissible location");
}

int PhantomSpec::min_x() const noexcept { return static_cast<int>(std::ceil(margin())); }
int PhantomSpec::max_x() const noexcept { return static_cast<int>(std::floor(width - 1 - margin())); }
int PhantomSpec::min_y() const noexcept { return static_cast<int>(std::ceil(margin())); }
int PhantomSpec::max_y() const noexcept { return static_cast<int>(std::floor(height - 1 - margin())); }

bool PhantomSpec::admissible(Pixel p) const noexcept {
  return p.x >= min_x() && p.x <= max_x() && p.y >= min_y() && p.y <= max_y();
}

std::string PhantomSpec::canonical() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "phantom:%d:%d:%.17g:%.17g:%.17g:%.17g:%.17g:%.17g:%.17g", width, height, pixel_size,
                lump_mean, lump_fwhm, lesion_fwhm, lesion_amplitude, dc_offset, margin());
  return buf;
}

void PinholeSpec::validate() const {
  require(relative_diameter > 0 && std::isfinite(relative_diameter), ErrorCode::invalid_parameter,
          "relative_diameter must be positive");
  require(base_counts > 0 && std::isfinite(base_counts), ErrorCode::invalid_parameter, "base_counts must be positive");
}

std::string PinholeSpec::canonical() const {
  char buf[128];
  std::snprintf(buf, sizeof buf, "pinhole:%.17g:%.17g:%d", relative_diameter, base_counts, poisson_noise ? 1 : 0);
  return buf;
}

int sample_lump_count(double mean, Rng& rng) {
  require(mean > 0 && std::isfinite(mean), ErrorCode::invalid_parameter, "lump mean must be positive");
  std::poisson_distribution<int> dist(mean);
  return dist(rng);
}

namespace {

std::vector<double> gaussian_profile(int n, double center, double sigma) {
  std::vector<double> out(static_cast<std::size_t>(n));
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int i = 0; i < n; ++i) {
    const double d = i - center;
    out[static_cast<std::size_t>(i)] = std::exp(-d * d * inv);
  }
  return out;
}

}  // namespace

Image render_lumps(const PhantomSpec& spec, std::span<const Point2> centers) {
  spec.validate();
  Image img(spec.width, spec.height, spec.pixel_size, spec.dc_offset);
  const double sigma = fwhm_to_sigma(spec.lump_fwhm);
  for (const Point2& c : centers) {
    const auto gx = gaussian_profile(spec.width, c.x, sigma);
    const auto gy = gaussian_profile(spec.height, c.y, sigma);
    for (int y = 0; y < spec.height; ++y) {
      const double wy = gy[static_cast<std::size_t>(y)];
      if (wy < 1e-300) continue;
      for (int x = 0; x < spec.width; ++x) img.at(x, y) += wy * gx[static_cast<std::size_t>(x)];
    }
  }
  return img;
}

Image generate_background(const PhantomSpec& spec, Rng& rng) {
  spec.validate();
  const int n = sample_lump_count(spec.lump_mean, rng);
  // Centres are uniform over the pixel footprint [-0.5, size - 0.5).
  std::uniform_real_distribution<double> ux(-0.5, spec.width - 0.5);
  std::uniform_real_distribution<double> uy(-0.5, spec.height - 0.5);
  std::vector<Point2> centers(static_cast<std::size_t>(n));
  for (auto& c : centers) {
    c.x = ux(rng);
    c.y = uy(rng);
  }
  return render_lumps(spec, centers);
}

Image insert_lesion(const Image& background, Pixel location, const PhantomSpec& spec) {
  spec.validate();
  require(background.width() == spec.width && background.height() == spec.height, ErrorCode::invalid_parameter,
          "background size does not match phantom spec");
  require(spec.admissible(location), ErrorCode::invalid_location, "lesion location outside the admissible margin");
  Image out = background;
  if (spec.lesion_amplitude == 0.0) return out;
  const double sigma = fwhm_to_sigma(spec.lesion_fwhm);
  const int radius = static_cast<int>(std::ceil(6.0 * sigma));
  const double inv = 1.0 / (2.0 * sigma * sigma);
  const int y0 = std::max(0, location.y - radius), y1 = std::min(spec.height - 1, location.y + radius);
  const int x0 = std::max(0, location.x - radius), x1 = std::min(spec.width - 1, location.x + radius);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - location.x, dy = y - location.y;
      out.at(x, y) += spec.lesion_amplitude * std::exp(-(dx * dx + dy * dy) * inv);
    }
  }
  return out;
}

Image gaussian_blur(const Image& image, double sigma) {
  require(sigma > 0 && std::isfinite(sigma), ErrorCode::invalid_parameter, "blur sigma must be positive");
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    ksum += v;
  }
  for (double& v : k) v /= ksum;

  const int w = image.width(), h = image.height();
  Image tmp(w, h, image.pixel_size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      const int lo = std::max(-radius, -x), hi = std::min(radius, w - 1 - x);
      for (int i = lo; i <= hi; ++i) acc += k[static_cast<std::size_t>(i + radius)] * image.at(x + i, y);
      tmp.at(x, y) = acc;
    }
  }
  Image out(w, h, image.pixel_size());
  for (int y = 0; y < h; ++y) {
    const int lo = std::max(-radius, -y), hi = std::min(radius, h - 1 - y);
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = lo; i <= hi; ++i) acc += k[static_cast<std::size_t>(i + radius)] * tmp.at(x, y + i);
      out.at(x, y) = acc;
    }
  }
  return out;
}

Image image_pinhole(const Image& phantom, const PinholeSpec& pinhole, double lesion_fwhm, Rng& rng) {
  pinhole.validate();
  require(lesion_fwhm > 0, ErrorCode::invalid_parameter, "lesion_fwhm must be positive");
  Image blurred = gaussian_blur(phantom, fwhm_to_sigma(pinhole.relative_diameter * lesion_fwhm));
  const double total = blurred.sum();
  require(total > 0 && std::isfinite(total), ErrorCode::invalid_parameter, "phantom must have positive total intensity");
  const double scale = pinhole.base_counts * pinhole.relative_diameter * pinhole.relative_diameter / total;
  for (double& v : blurred.data()) v = std::max(0.0, v * scale);
  if (!pinhole.poisson_noise) return blurred;
  for (double& v : blurred.data()) {
    if (v <= 0.0) {
      v = 0.0;
      continue;
    }
    std::poisson_distribution<long long> dist(v);
    v = static_cast<double>(dist(rng));
  }
  return blurred;
}

Case generate_case(const PhantomSpec& spec, const PinholeSpec& pinhole, bool lesion_present, std::uint64_t seed) {
  Rng rng(seed);
  Case c;
  c.seed = seed;
  c.lesion_present = lesion_present;
  Image phantom = generate_background(spec, rng);
  if (lesion_present) {
    std::uniform_int_distribution<int> ux(spec.min_x(), spec.max_x());
    std::uniform_int_distribution<int> uy(spec.min_y(), spec.max_y());
    const Pixel loc{ux(rng), uy(rng)};
    phantom = insert_lesion(phantom, loc, spec);
    c.lesion_location = loc;
  }
  c.image = image_pinhole(phantom, pinhole, spec.lesion_fwhm, rng);
  return c;
}

std::vector<Case> generate_dataset(const PhantomSpec& spec, const PinholeSpec& pinhole, int n_present, int n_absent,
                                   std::uint64_t master_seed, int threads) {
  require(n_present >= 0 && n_absent >= 0, ErrorCode::invalid_parameter, "case counts must be non-negative");
  spec.validate();
  pinhole.validate();
  const auto total = static_cast<std::size_t>(n_present) + static_cast<std::size_t>(n_absent);
  std::vector<Case> cases(total);
  parallel_for(total, threads, [&](std::size_t i) {
    const bool present = i < static_cast<std::size_t>(n_present);
    cases[i] = generate_case(spec, pinhole, present, derive_seed(master_seed, static_cast<std::uint64_t>(i)));
    char id[32];
    std::snprintf(id, sizeof id, "c%05zu", i);
    cases[i].id = id;
  });
  return cases;
}

}  // namespace vsmo
