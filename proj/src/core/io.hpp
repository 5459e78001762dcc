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

// Dataset files.
//
//   <dir>/manifest.csv   id,label,x,y,seed
//   <dir>/<id>.pgm       16-bit binary PGM (P5, maxval 65535, big endian)
//   <dir>/<id>.json      sidecar: truth, location, seed, spec hash, and the
//                        linear map from stored levels back to intensities
//
// Integer-valued images within [0, 65535] (noisy projections) are stored
// exactly with scale 1 and offset 0. Anything else is quantized over its
// range.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "core/image.hpp"
#include "core/phantom_sim.hpp"

namespace vsmo {

struct PgmImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> levels;  // row-major
};

void write_pgm16(const std::filesystem::path& path, const PgmImage& pgm);
PgmImage read_pgm16(const std::filesystem::path& path);

/// value = offset + scale * level
struct LevelMap {
  double scale = 1.0;
  double offset = 0.0;
};

LevelMap choose_level_map(const Image& image);
PgmImage quantize(const Image& image, const LevelMap& map);
Image dequantize(const PgmImage& pgm, const LevelMap& map, double pixel_size);

struct ManifestRow {
  std::string id;
  bool lesion_present = false;
  std::optional<Pixel> location;
  std::uint64_t seed = 0;
};

std::string manifest_csv_header();
std::string write_manifest_csv(const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> parse_manifest_csv(const std::string& text);

/// Hash of the simulation settings recorded in every sidecar.
std::string spec_hash(const PhantomSpec& spec, const PinholeSpec& pinhole);

void save_case(const std::filesystem::path& dir, const Case& c, const std::string& spec_hash);
Case load_case(const std::filesystem::path& dir, const std::string& id);

void save_dataset(const std::filesystem::path& dir, const std::vector<Case>& cases, const std::string& spec_hash);
/// Cases in manifest order; sidecars must agree with the manifest.
std::vector<Case> load_dataset(const std::filesystem::path& dir);

std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace vsmo
