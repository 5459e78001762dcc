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

#include "core/gabor_bank.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numbers>
#include <sstream>

namespace vsmo {

void GaborSpec::validate() const {
  require(width > 0 && std::isfinite(width), ErrorCode::invalid_parameter, "Gabor width must be positive");
  require(freq > 0 && std::isfinite(freq), ErrorCode::invalid_parameter, "Gabor frequency must be positive");
  require(theta >= 0 && theta < std::numbers::pi, ErrorCode::invalid_parameter, "Gabor theta must lie in [0, pi)");
  require(phi >= 0 && phi < 2 * std::numbers::pi, ErrorCode::invalid_parameter, "Gabor phi must lie in [0, 2 pi)");
}

double GaborSpec::evaluate(double dx, double dy) const noexcept {
  const double envelope = std::exp(-4.0 * std::numbers::ln2 * (dx * dx + dy * dy) / (width * width));
  return envelope * std::cos(2.0 * std::numbers::pi * freq * (dx * std::cos(theta) + dy * std::sin(theta)) + phi);
}

int default_support(double width) {
  int s = static_cast<int>(std::ceil(4.0 * width)) + 1;
  if (s % 2 == 0) ++s;
  return s;
}

Image gabor_kernel(const GaborSpec& spec, int support) {
  spec.validate();
  require(support % 2 == 1, ErrorCode::invalid_parameter, "kernel support must be odd");
  require(support >= 4.0 * spec.width, ErrorCode::invalid_parameter, "kernel support must be at least 4 Ws");
  Image k(support, support);
  const int c = (support - 1) / 2;
  for (int y = 0; y < support; ++y)
    for (int x = 0; x < support; ++x) k.at(x, y) = spec.evaluate(x - c, y - c);
  return k;
}

std::string default_label(const GaborSpec& spec) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "W%g_F%.4g_T%g_P%g", spec.width, spec.freq,
                std::round(spec.theta * 180.0 / std::numbers::pi), std::round(spec.phi * 180.0 / std::numbers::pi));
  return buf;
}

void FeatureBank::add(const GaborSpec& spec, std::string label) {
  spec.validate();
  require(std::find(specs_.begin(), specs_.end(), spec) == specs_.end(), ErrorCode::invalid_parameter,
          "duplicate Gabor spec in bank");
  if (label.empty()) label = default_label(spec);
  require(std::find(labels_.begin(), labels_.end(), label) == labels_.end(), ErrorCode::invalid_parameter,
          "duplicate bank label " + label);
  require(label.find_first_of(",\n") == std::string::npos, ErrorCode::invalid_parameter, "bank labels cannot contain ','");
  specs_.push_back(spec);
  labels_.push_back(std::move(label));
}

int FeatureBank::max_support() const {
  int s = 1;
  for (const auto& g : specs_) s = std::max(s, default_support(g.width));
  return s;
}

FeatureBank FeatureBank::subset(std::span<const int> indices) const {
  FeatureBank out;
  for (int i : indices) {
    require(i >= 0 && static_cast<std::size_t>(i) < size(), ErrorCode::invalid_parameter, "bank index out of range");
    out.add(specs_[static_cast<std::size_t>(i)], labels_[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::string FeatureBank::serialize() const {
  std::ostringstream os;
  os << "# vsmo feature bank v1\n";
  os << "index,label,width,freq,theta,phi\n";
  char buf[256];
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    const auto& g = specs_[i];
    std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.17g,%.17g,%.17g\n", i, labels_[i].c_str(), g.width, g.freq, g.theta,
                  g.phi);
    os << buf;
  }
  return os.str();
}

FeatureBank FeatureBank::parse(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) && line.rfind("# vsmo feature bank v1", 0) == 0, ErrorCode::parse,
          "missing feature bank header");
  require(static_cast<bool>(std::getline(is, line)) && line == "index,label,width,freq,theta,phi", ErrorCode::parse,
          "unexpected feature bank columns");
  FeatureBank bank;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    require(cells.size() == 6, ErrorCode::parse, "malformed feature bank row: " + line);
    require(std::stoul(cells[0]) == bank.size(), ErrorCode::parse, "feature bank rows out of order");
    try {
      bank.add(GaborSpec{std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4]), std::stod(cells[5])}, cells[1]);
    } catch (const std::invalid_argument&) {
      fail(ErrorCode::parse, "non-numeric feature bank row: " + line);
    }
  }
  return bank;
}

std::string FeatureBank::hash() const { return hex64(fnv1a64(serialize())); }

FeatureBank build_bank(std::span<const double> widths, std::span<const double> freqs, std::span<const double> thetas,
                       std::span<const double> phis) {
  require(!widths.empty() && !freqs.empty() && !thetas.empty() && !phis.empty(), ErrorCode::invalid_parameter,
          "bank parameter lists must be non-empty");
  FeatureBank bank;
  for (double w : widths)
    for (double f : freqs)
      for (double t : thetas)
        for (double p : phis) bank.add(GaborSpec{w, f, t, p});
  return bank;
}

FeatureBank default_bank() {
  using std::numbers::pi;
  const double widths[] = {7.0, 14.0};
  const double freqs[] = {1.0 / 14.0, 1.0 / 7.0, 2.0 / 7.0};
  const double thetas[] = {0.0, pi / 4, pi / 2, 3 * pi / 4};
  const double phis[] = {0.0, pi / 2};
  return build_bank(widths, freqs, thetas, phis);
}

// ---------------------------------------------------------------------------

namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

int fft_size(int n) {
  for (int s = n;; ++s) {
    int r = s;
    for (int p : {2, 3, 5})
      while (r % p == 0) r /= p;
    if (r == 1) return s;
  }
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t bytes) : ptr(fftw_malloc(bytes)) {
    if (!ptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  void* ptr;
};

}  // namespace

struct FeatureEngine::Plan {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
  ~Plan() {
    std::lock_guard lock(planner_mutex());
    if (forward) fftw_destroy_plan(forward);
    if (inverse) fftw_destroy_plan(inverse);
  }
};

FeatureEngine::FeatureEngine(const FeatureBank& bank, int width, int height)
    : bank_(bank), width_(width), height_(height) {
  require(!bank.empty(), ErrorCode::invalid_parameter, "feature engine needs a non-empty bank");
  require(width > 0 && height > 0, ErrorCode::invalid_parameter, "image dimensions must be positive");
  const int support = bank.max_support();
  require(support <= width && support <= height, ErrorCode::invalid_parameter, "kernel support exceeds image size");
  const int half = (support - 1) / 2;
  padded_ = fft_size(std::max(width, height) + half);
  const auto p = static_cast<std::size_t>(padded_);
  const std::size_t nc = p * (p / 2 + 1);

  plan_ = std::make_unique<Plan>();
  {
    FftwBuffer real(sizeof(double) * p * p);
    FftwBuffer cplx(sizeof(fftw_complex) * nc);
    std::lock_guard lock(planner_mutex());
    // FFTW_ESTIMATE keeps the algorithm choice, and so the rounding, fixed
    // from run to run.
    plan_->forward = fftw_plan_dft_r2c_2d(padded_, padded_, static_cast<double*>(real.ptr),
                                          static_cast<fftw_complex*>(cplx.ptr), FFTW_ESTIMATE);
    plan_->inverse = fftw_plan_dft_c2r_2d(padded_, padded_, static_cast<fftw_complex*>(cplx.ptr),
                                          static_cast<double*>(real.ptr), FFTW_ESTIMATE);
  }
  require(plan_->forward && plan_->inverse, ErrorCode::invalid_parameter, "FFT planning failed");

  kernels_.reserve(bank.size());
  spectra_.reserve(bank.size());
  for (std::size_t k = 0; k < bank.size(); ++k) {
    const int s = default_support(bank.spec(k).width);
    kernels_.push_back(gabor_kernel(bank.spec(k), s));
    // Kernel tap (u, v) relative to the centre lands at index (u mod P, v mod P).
    Image wrapped(padded_, padded_);
    const int c = (s - 1) / 2;
    for (int v = 0; v < s; ++v)
      for (int u = 0; u < s; ++u)
        wrapped.at((u - c + padded_) % padded_, (v - c + padded_) % padded_) = kernels_.back().at(u, v);
    auto spec = forward(wrapped);
    for (auto& z : spec) z = std::conj(z);
    spectra_.push_back(std::move(spec));
  }
}

FeatureEngine::~FeatureEngine() = default;

void FeatureEngine::check_image(const Image& image) const {
  require(image.width() == width_ && image.height() == height_, ErrorCode::invalid_parameter,
          "image size does not match feature engine");
}

std::vector<std::complex<double>> FeatureEngine::forward(const Image& image) const {
  const auto p = static_cast<std::size_t>(padded_);
  const std::size_t nc = p * (p / 2 + 1);
  FftwBuffer real(sizeof(double) * p * p);
  FftwBuffer cplx(sizeof(fftw_complex) * nc);
  auto* r = static_cast<double*>(real.ptr);
  std::fill(r, r + p * p, 0.0);
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x) r[static_cast<std::size_t>(y) * p + static_cast<std::size_t>(x)] = image.at(x, y);
  fftw_execute_dft_r2c(plan_->forward, r, static_cast<fftw_complex*>(cplx.ptr));
  const auto* c = static_cast<const std::complex<double>*>(cplx.ptr);
  return {c, c + nc};
}

Image FeatureEngine::inverse(const std::vector<std::complex<double>>& spectrum) const {
  const auto p = static_cast<std::size_t>(padded_);
  const std::size_t nc = p * (p / 2 + 1);
  FftwBuffer real(sizeof(double) * p * p);
  FftwBuffer cplx(sizeof(fftw_complex) * nc);
  std::copy(spectrum.begin(), spectrum.end(), static_cast<std::complex<double>*>(cplx.ptr));
  fftw_execute_dft_c2r(plan_->inverse, static_cast<fftw_complex*>(cplx.ptr), static_cast<double*>(real.ptr));
  const auto* r = static_cast<const double*>(real.ptr);
  const double norm = 1.0 / static_cast<double>(p * p);
  Image out(width_, height_);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) out.at(x, y) = r[static_cast<std::size_t>(y) * p + static_cast<std::size_t>(x)] * norm;
  return out;
}

std::vector<Image> FeatureEngine::maps(const Image& image, std::span<const int> indices) const {
  check_image(image);
  const auto f = forward(image);
  std::vector<Image> out;
  out.reserve(indices.size());
  std::vector<std::complex<double>> prod(f.size());
  for (int k : indices) {
    require(k >= 0 && static_cast<std::size_t>(k) < spectra_.size(), ErrorCode::invalid_parameter, "bank index out of range");
    const auto& s = spectra_[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < f.size(); ++i) prod[i] = f[i] * s[i];
    out.push_back(inverse(prod));
  }
  return out;
}

Image FeatureEngine::map(const Image& image, int index) const {
  const int idx[] = {index};
  return std::move(maps(image, idx).front());
}

Image FeatureEngine::weighted_map(const Image& image, std::span<const int> indices, std::span<const double> weights) const {
  check_image(image);
  require(indices.size() == weights.size() && !indices.empty(), ErrorCode::invalid_parameter,
          "weighted_map needs one weight per index");
  const auto f = forward(image);
  std::vector<std::complex<double>> combined(f.size(), {0.0, 0.0});
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const int k = indices[j];
    require(k >= 0 && static_cast<std::size_t>(k) < spectra_.size(), ErrorCode::invalid_parameter, "bank index out of range");
    const auto& s = spectra_[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < f.size(); ++i) combined[i] += weights[j] * s[i];
  }
  for (std::size_t i = 0; i < f.size(); ++i) combined[i] *= f[i];
  return inverse(combined);
}

double FeatureEngine::extract_one(const Image& image, Pixel location, int index) const {
  require(index >= 0 && static_cast<std::size_t>(index) < kernels_.size(), ErrorCode::invalid_parameter,
          "bank index out of range");
  const Image& k = kernels_[static_cast<std::size_t>(index)];
  const int s = k.width(), c = (s - 1) / 2;
  const int v0 = std::max(0, c - location.y), v1 = std::min(s - 1, image.height() - 1 - location.y + c);
  const int u0 = std::max(0, c - location.x), u1 = std::min(s - 1, image.width() - 1 - location.x + c);
  double acc = 0.0;
  for (int v = v0; v <= v1; ++v)
    for (int u = u0; u <= u1; ++u) acc += k.at(u, v) * image.at(location.x + u - c, location.y + v - c);
  return acc;
}

std::vector<double> FeatureEngine::extract(const Image& image, Pixel location, std::span<const int> indices) const {
  check_image(image);
  require(image.contains(location), ErrorCode::invalid_location, "feature location outside image");
  std::vector<double> out;
  out.reserve(indices.size());
  for (int k : indices) out.push_back(extract_one(image, location, k));
  return out;
}

Image feature_map(const Image& image, const GaborSpec& spec) {
  FeatureBank bank;
  bank.add(spec);
  const FeatureEngine engine(bank, image.width(), image.height());
  return engine.map(image, 0);
}

FeatureVector extract_features(const Image& image, const FeatureBank& bank, Pixel location) {
  require(image.contains(location), ErrorCode::invalid_location, "feature location outside image");
  FeatureVector fv;
  fv.location = location;
  fv.values.reserve(bank.size());
  for (std::size_t k = 0; k < bank.size(); ++k) {
    const Image kern = gabor_kernel(bank.spec(k), default_support(bank.spec(k).width));
    const int s = kern.width(), c = (s - 1) / 2;
    double acc = 0.0;
    for (int v = 0; v < s; ++v) {
      const int y = location.y + v - c;
      if (y < 0 || y >= image.height()) continue;
      for (int u = 0; u < s; ++u) {
        const int x = location.x + u - c;
        if (x < 0 || x >= image.width()) continue;
        acc += kern.at(u, v) * image.at(x, y);
      }
    }
    fv.values.push_back(acc);
  }
  return fv;
}

}  // namespace vsmo
