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

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vsmo {

/// Error categories shared by the C++ core and the C API status codes.
enum class ErrorCode {
  invalid_parameter = 1,
  invalid_location,
  degenerate_stats,
  conditioning,
  training,
  invalid_input,
  io,
  parse,
  not_found,
  conflict,
  precondition,
  validation,
  session_complete,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Thrown by estimate_class_stats when a class has too few samples.
class DegenerateStatsError : public Error {
 public:
  DegenerateStatsError(const std::string& what, int shortfall)
      : Error(ErrorCode::degenerate_stats, what), shortfall_(shortfall) {}
  /// Number of additional samples the smallest class would need.
  [[nodiscard]] int shortfall() const noexcept { return shortfall_; }

 private:
  int shortfall_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

/// Integer pixel position; x is the column, y is the row.
struct Pixel {
  int x = 0;
  int y = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

inline double distance(Pixel a, Pixel b) noexcept {
  return std::hypot(static_cast<double>(a.x - b.x), static_cast<double>(a.y - b.y));
}

/// FWHM to Gaussian standard deviation.
inline double fwhm_to_sigma(double fwhm) noexcept {
  return fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
}

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Child seed for stream `stream` under `parent`. Streams are independent
/// of each other and of how many siblings exist.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) noexcept {
  return mix64(mix64(parent) ^ mix64(stream + 0x632BE59BD9B4E019ULL));
}

/// Named stream: the label is hashed into the stream id.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label) noexcept;

/// 64-bit FNV-1a, stable across platforms; used for config/bank/spec hashes.
std::uint64_t fnv1a64(std::string_view text) noexcept;
std::string hex64(std::uint64_t value);

/// Rating assigned when no decision feature survives thresholding.
inline constexpr double kSentinelRating = -9999.0;

}  // namespace vsmo
