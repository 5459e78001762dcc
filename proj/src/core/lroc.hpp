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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/common.hpp"

namespace vsmo {

/// One scored case. Ratings compare as plain numbers, so the sentinel
/// (-9999) sorts below every finite rating the observer produces and two
/// sentinels tie.
struct LrocCase {
  std::string id;
  bool lesion_present = false;
  std::optional<Pixel> true_location;
  double rating = 0.0;
  std::optional<Pixel> reported_location;
};

using LrocDataset = std::vector<LrocCase>;

struct AucSummary {
  double auc = 0.0;
  double se = 0.0;
  int n_trials = 0;
};

/// Mann-Whitney estimate: P(present > absent) + 0.5 P(present == absent).
double roc_auc(std::span<const double> ratings_present, std::span<const double> ratings_absent);
double roc_auc(const LrocDataset& dataset);

/// Closed ball: distance <= radius.
bool localization_correct(Pixel reported, Pixel truth, double radius);
bool localization_correct(const LrocCase& c, double radius);

/// Like roc_auc, but a (present, absent) pair only counts when the present
/// case is correctly localized within `radius`.
double lroc_auc(const LrocDataset& dataset, double radius);

/// Mean and sample-SD / sqrt(n) of per-trial AUCs; needs at least 2 trials.
AucSummary auc_standard_error(std::span<const double> trial_aucs);

/// Per-case CSV shared by observer evaluation and the reader study:
///   case_id,truth,true_x,true_y,rating,x,y
/// Absent locations are empty cells.
std::string results_csv_header();
std::string results_csv_row(const LrocCase& c);
std::string write_results_csv(const LrocDataset& dataset);
LrocDataset parse_results_csv(const std::string& text);
LrocDataset read_results_csv(const std::string& path);

}  // namespace vsmo
