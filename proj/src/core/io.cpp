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

#include "core/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace vsmo {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::io, "cannot write " + tmp.string());
    out << text;
    out.flush();
    require(static_cast<bool>(out), ErrorCode::io, "failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  require(!ec, ErrorCode::io, "cannot rename " + tmp.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// PGM

void write_pgm16(const fs::path& path, const PgmImage& pgm) {
  require(pgm.width > 0 && pgm.height > 0 &&
              pgm.levels.size() == static_cast<std::size_t>(pgm.width) * static_cast<std::size_t>(pgm.height),
          ErrorCode::invalid_input, "PGM size does not match its levels");
  std::string out = "P5\n" + std::to_string(pgm.width) + " " + std::to_string(pgm.height) + "\n65535\n";
  out.reserve(out.size() + 2 * pgm.levels.size());
  for (std::uint16_t v : pgm.levels) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
  }
  write_text_file(path, out);
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(const std::string& data, std::size_t& pos) {
  for (;;) {
    while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    if (pos < data.size() && data[pos] == '#') {
      while (pos < data.size() && data[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
  return data.substr(start, pos - start);
}

int pgm_int(const std::string& data, std::size_t& pos) {
  const std::string t = pgm_token(data, pos);
  int v = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  require(ec == std::errc() && p == t.data() + t.size() && !t.empty(), ErrorCode::parse, "bad PGM header field: " + t);
  return v;
}

}  // namespace

PgmImage read_pgm16(const fs::path& path) {
  const std::string data = read_text_file(path);
  std::size_t pos = 0;
  require(pgm_token(data, pos) == "P5", ErrorCode::parse, "not a binary PGM: " + path.string());
  PgmImage pgm;
  pgm.width = pgm_int(data, pos);
  pgm.height = pgm_int(data, pos);
  const int maxval = pgm_int(data, pos);
  require(pgm.width > 0 && pgm.height > 0, ErrorCode::parse, "bad PGM size in " + path.string());
  require(maxval > 255 && maxval <= 65535, ErrorCode::parse, "expected a 16-bit PGM: " + path.string());
  ++pos;  // single whitespace before the raster
  const std::size_t n = static_cast<std::size_t>(pgm.width) * static_cast<std::size_t>(pgm.height);
  require(data.size() >= pos + 2 * n, ErrorCode::parse, "truncated PGM raster in " + path.string());
  pgm.levels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    pgm.levels[i] = static_cast<std::uint16_t>((static_cast<unsigned char>(data[pos + 2 * i]) << 8) |
                                               static_cast<unsigned char>(data[pos + 2 * i + 1]));
  return pgm;
}

LevelMap choose_level_map(const Image& image) {
  const auto d = image.data();
  require(!d.empty(), ErrorCode::invalid_input, "empty image");
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const bool integral = std::all_of(d.begin(), d.end(), [](double v) { return v == std::floor(v); });
  if (integral && *lo >= 0.0 && *hi <= 65535.0) return {1.0, 0.0};
  if (*hi == *lo) return {1.0, *lo};
  return {(*hi - *lo) / 65535.0, *lo};
}

PgmImage quantize(const Image& image, const LevelMap& map) {
  PgmImage pgm{image.width(), image.height(), {}};
  pgm.levels.reserve(image.size());
  for (double v : image.data()) {
    const double level = std::round((v - map.offset) / map.scale);
    pgm.levels.push_back(static_cast<std::uint16_t>(std::clamp(level, 0.0, 65535.0)));
  }
  return pgm;
}

Image dequantize(const PgmImage& pgm, const LevelMap& map, double pixel_size) {
  Image img(pgm.width, pgm.height, pixel_size);
  auto d = img.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = map.offset + map.scale * pgm.levels[i];
  return img;
}

// ---------------------------------------------------------------------------
// Manifest

std::string manifest_csv_header() { return "id,label,x,y,seed"; }

std::string write_manifest_csv(const std::vector<ManifestRow>& rows) {
  std::string out = manifest_csv_header() + "\n";
  for (const auto& r : rows) {
    out += r.id + "," + (r.lesion_present ? "1" : "0") + ",";
    if (r.location) out += std::to_string(r.location->x) + "," + std::to_string(r.location->y);
    else out += ",";
    out += "," + std::to_string(r.seed) + "\n";
  }
  return out;
}

std::vector<ManifestRow> parse_manifest_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorCode::parse, "empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == manifest_csv_header(), ErrorCode::parse, "unexpected manifest header: " + line);
  std::vector<ManifestRow> rows;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    require(cells.size() == 5, ErrorCode::parse, "manifest row needs 5 columns: " + line);
    require(cells[1] == "0" || cells[1] == "1", ErrorCode::parse, "label must be 0 or 1: " + line);
    ManifestRow r;
    r.id = cells[0];
    r.lesion_present = cells[1] == "1";
    try {
      if (!cells[2].empty() || !cells[3].empty()) r.location = Pixel{std::stoi(cells[2]), std::stoi(cells[3])};
      r.seed = std::stoull(cells[4]);
    } catch (const std::logic_error&) {
      fail(ErrorCode::parse, "malformed manifest row: " + line);
    }
    require(r.lesion_present == r.location.has_value(), ErrorCode::parse,
            "a location is required exactly for lesion-present rows: " + line);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string spec_hash(const PhantomSpec& spec, const PinholeSpec& pinhole) {
  return hex64(fnv1a64(spec.canonical() + "|" + pinhole.canonical()));
}

// ---------------------------------------------------------------------------
// Cases

namespace {

void check_id(const std::string& id) {
  require(!id.empty() && std::all_of(id.begin(), id.end(),
                                     [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; }),
          ErrorCode::invalid_input, "case ids may only hold letters, digits, '_' and '-': " + id);
}

}  // namespace

void save_case(const fs::path& dir, const Case& c, const std::string& hash) {
  check_id(c.id);
  const LevelMap map = choose_level_map(c.image);
  write_pgm16(dir / (c.id + ".pgm"), quantize(c.image, map));
  json j = {{"format", "vsmo-case"},
            {"version", 1},
            {"id", c.id},
            {"lesion_present", c.lesion_present},
            {"lesion_x", nullptr},
            {"lesion_y", nullptr},
            {"seed", c.seed},
            {"spec_hash", hash},
            {"pixel_size", c.image.pixel_size()},
            {"scale", map.scale},
            {"offset", map.offset}};
  if (c.lesion_location) {
    j["lesion_x"] = c.lesion_location->x;
    j["lesion_y"] = c.lesion_location->y;
  }
  write_text_file(dir / (c.id + ".json"), j.dump(1) + "\n");
}

Case load_case(const fs::path& dir, const std::string& id) {
  check_id(id);
  Case c;
  LevelMap map;
  double pixel_size = 1.0;
  try {
    const json j = json::parse(read_text_file(dir / (id + ".json")));
    require(j.at("format") == "vsmo-case", ErrorCode::parse, "not a case sidecar: " + id);
    c.id = j.at("id").get<std::string>();
    require(c.id == id, ErrorCode::parse, "sidecar id mismatch for " + id);
    c.lesion_present = j.at("lesion_present").get<bool>();
    if (!j.at("lesion_x").is_null()) c.lesion_location = Pixel{j.at("lesion_x").get<int>(), j.at("lesion_y").get<int>()};
    require(c.lesion_present == c.lesion_location.has_value(), ErrorCode::parse, "sidecar truth inconsistent: " + id);
    c.seed = j.at("seed").get<std::uint64_t>();
    pixel_size = j.at("pixel_size").get<double>();
    map = {j.at("scale").get<double>(), j.at("offset").get<double>()};
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, "malformed sidecar for " + id + ": " + e.what());
  }
  c.image = dequantize(read_pgm16(dir / (id + ".pgm")), map, pixel_size);
  return c;
}

void save_dataset(const fs::path& dir, const std::vector<Case>& cases, const std::string& hash) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::io, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<ManifestRow> rows;
  rows.reserve(cases.size());
  for (const auto& c : cases) {
    save_case(dir, c, hash);
    rows.push_back({c.id, c.lesion_present, c.lesion_location, c.seed});
  }
  write_text_file(dir / "manifest.csv", write_manifest_csv(rows));
}

std::vector<Case> load_dataset(const fs::path& dir) {
  const auto rows = parse_manifest_csv(read_text_file(dir / "manifest.csv"));
  std::vector<Case> cases;
  cases.reserve(rows.size());
  for (const auto& r : rows) {
    Case c = load_case(dir, r.id);
    require(c.lesion_present == r.lesion_present && c.lesion_location == r.location && c.seed == r.seed,
            ErrorCode::parse, "manifest and sidecar disagree for " + r.id);
    cases.push_back(std::move(c));
  }
  return cases;
}

}  // namespace vsmo
