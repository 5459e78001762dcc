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

#include "core/lroc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace vsmo {

namespace {

// Sum over present ratings r of #(absent < r) + 0.5 #(absent == r), with
// `absent` sorted ascending.
double pair_credit(double r, const std::vector<double>& absent) {
  const auto lo = std::lower_bound(absent.begin(), absent.end(), r);
  const auto hi = std::upper_bound(lo, absent.end(), r);
  return static_cast<double>(lo - absent.begin()) + 0.5 * static_cast<double>(hi - lo);
}

void check_finite_ratings(std::span<const double> ratings) {
  for (double r : ratings) require(!std::isnan(r), ErrorCode::invalid_input, "ratings must not be NaN");
}

}  // namespace

double roc_auc(std::span<const double> ratings_present, std::span<const double> ratings_absent) {
  require(!ratings_present.empty() && !ratings_absent.empty(), ErrorCode::invalid_input,
          "ROC analysis needs both lesion-present and lesion-absent cases");
  check_finite_ratings(ratings_present);
  check_finite_ratings(ratings_absent);
  std::vector<double> absent(ratings_absent.begin(), ratings_absent.end());
  std::sort(absent.begin(), absent.end());
  double credit = 0.0;
  for (double r : ratings_present) credit += pair_credit(r, absent);
  return credit / (static_cast<double>(ratings_present.size()) * static_cast<double>(absent.size()));
}

double roc_auc(const LrocDataset& dataset) {
  std::vector<double> p, a;
  for (const auto& c : dataset) (c.lesion_present ? p : a).push_back(c.rating);
  return roc_auc(p, a);
}

bool localization_correct(Pixel reported, Pixel truth, double radius) { return distance(reported, truth) <= radius; }

bool localization_correct(const LrocCase& c, double radius) {
  if (!c.lesion_present || !c.reported_location) return false;
  require(c.true_location.has_value(), ErrorCode::invalid_input, "lesion-present case without a true location");
  return localization_correct(*c.reported_location, *c.true_location, radius);
}

double lroc_auc(const LrocDataset& dataset, double radius) {
  require(radius >= 0.0, ErrorCode::invalid_parameter, "localization radius must be non-negative");
  std::vector<double> absent;
  std::size_t n_present = 0;
  for (const auto& c : dataset) {
    require(!std::isnan(c.rating), ErrorCode::invalid_input, "ratings must not be NaN");
    if (c.lesion_present)
      ++n_present;
    else
      absent.push_back(c.rating);
  }
  require(n_present > 0 && !absent.empty(), ErrorCode::invalid_input,
          "LROC analysis needs both lesion-present and lesion-absent cases");
  std::sort(absent.begin(), absent.end());
  double credit = 0.0;
  for (const auto& c : dataset)
    if (c.lesion_present && localization_correct(c, radius)) credit += pair_credit(c.rating, absent);
  return credit / (static_cast<double>(n_present) * static_cast<double>(absent.size()));
}

AucSummary auc_standard_error(std::span<const double> trial_aucs) {
  require(trial_aucs.size() >= 2, ErrorCode::invalid_input, "standard error needs at least 2 trials");
  const double n = static_cast<double>(trial_aucs.size());
  double mean = 0.0;
  for (double a : trial_aucs) mean += a;
  mean /= n;
  double ss = 0.0;
  for (double a : trial_aucs) ss += (a - mean) * (a - mean);
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n), static_cast<int>(trial_aucs.size())};
}

// ---------------------------------------------------------------------------

std::string results_csv_header() { return "case_id,truth,true_x,true_y,rating,x,y"; }

std::string results_csv_row(const LrocCase& c) {
  std::ostringstream os;
  os << c.id << ',' << (c.lesion_present ? 1 : 0) << ',';
  if (c.true_location) os << c.true_location->x << ',' << c.true_location->y;
  else os << ',';
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", c.rating);
  os << ',' << buf << ',';
  if (c.reported_location) os << c.reported_location->x << ',' << c.reported_location->y;
  else os << ',';
  return os.str();
}

std::string write_results_csv(const LrocDataset& dataset) {
  std::string out = results_csv_header() + "\n";
  for (const auto& c : dataset) out += results_csv_row(c) + "\n";
  return out;
}

namespace {

std::optional<Pixel> parse_location(const std::string& x, const std::string& y, const std::string& line) {
  if (x.empty() && y.empty()) return std::nullopt;
  require(!x.empty() && !y.empty(), ErrorCode::parse, "half-specified location in row: " + line);
  return Pixel{std::stoi(x), std::stoi(y)};
}

}  // namespace

LrocDataset parse_results_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), ErrorCode::parse, "empty results file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == results_csv_header(), ErrorCode::parse, "unexpected results header: " + line);
  LrocDataset out;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    require(cells.size() == 7, ErrorCode::parse, "results row needs 7 columns: " + line);
    try {
      LrocCase c;
      c.id = cells[0];
      require(cells[1] == "0" || cells[1] == "1", ErrorCode::parse, "truth must be 0 or 1: " + line);
      c.lesion_present = cells[1] == "1";
      c.true_location = parse_location(cells[2], cells[3], line);
      c.rating = std::stod(cells[4]);
      c.reported_location = parse_location(cells[5], cells[6], line);
      require(!c.lesion_present || c.true_location, ErrorCode::parse, "lesion-present row without a true location: " + line);
      out.push_back(std::move(c));
    } catch (const std::logic_error&) {
      fail(ErrorCode::parse, "malformed results row: " + line);
    }
  }
  return out;
}

LrocDataset read_results_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open results file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_results_csv(ss.str());
}

}  // namespace vsmo
