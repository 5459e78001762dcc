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

// Experiment configuration.
//
// The file is a sectioned key = value text file (see configs/default.toml):
//
//   [experiment]  seed, name, output_dir, threads
//   [phantom]     PhantomSpec fields
//   [pinhole]     base_counts, poisson_noise
//   [bank]        widths, freqs, thetas, phis, refined_size
//   [observer]    variants, features_per_stage, max_candidates, min_separation,
//                 search_margin, localization_radius
//   [sweep]       diameters, design_pairs, train_pairs, test_pairs, trials
//   [training_study]  diameter, sizes, trials, test_pairs, design_pairs
//   [correlation] snr, rhos, samples
//
// Lists are comma separated; "a:b:step" expands to an inclusive range.
// Strings may be quoted. Unknown sections or keys are errors.

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "core/observer.hpp"
#include "core/phantom_sim.hpp"

namespace vsmo {

/// Observer variant named like "pw", "npw-thr" or "pw-thr-shared":
/// prewhitening or not, trained thresholds or none, stage-specific feature
/// sets unless "shared".
struct ObserverVariant {
  std::string name;
  bool prewhitening = true;
  ThresholdStrategy thresholds = ThresholdStrategy::disabled;
  bool stage_specific = true;
};

ObserverVariant parse_variant(const std::string& name);

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 20260401;
  std::string output_dir = "results";
  int threads = 1;

  PhantomSpec phantom;
  PinholeSpec pinhole;

  std::vector<double> bank_widths{7.0, 14.0};
  std::vector<double> bank_freqs{1.0 / 14.0, 1.0 / 7.0, 2.0 / 7.0};
  std::vector<double> bank_thetas;  // default {0, pi/4, pi/2, 3pi/4}
  std::vector<double> bank_phis;    // default {0, pi/2}
  int refined_bank_size = 12;

  std::vector<ObserverVariant> variants;  // default pw, pw-thr, npw, npw-thr
  int features_per_stage = 3;
  int max_candidates = 20;
  double min_separation = 9.4;
  int search_margin = -1;  // negative: the phantom's lesion margin
  double localization_radius = 9.4;

  std::vector<double> diameters;  // default 0.2 .. 3.6 step 0.2
  int design_pairs = 100;
  int train_pairs = 50;
  int test_pairs = 200;
  int trials = 5;

  double study_diameter = 1.0;
  std::vector<int> study_sizes{30, 50, 100, 200, 300, 400, 500};
  int study_trials = 10;
  int study_test_pairs = 200;
  int study_design_pairs = 100;

  double correlation_snr = 1.0;
  std::vector<double> correlation_rhos;  // default 0 .. 0.95 step 0.05
  int correlation_samples = 100000;

  ExperimentConfig();

  void validate() const;
  [[nodiscard]] FeatureBank bank() const;
  /// Observer settings shared by every variant (features are chosen later).
  [[nodiscard]] ObserverConfig observer_base(const ObserverVariant& variant) const;
  /// Normalized text of every setting that affects results (output_dir and
  /// threads excluded).
  [[nodiscard]] std::string canonical() const;
  [[nodiscard]] std::string hash() const;
};

ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

/// "0.2:1.0:0.2" or "0.2, 0.4"; ranges include the end point (to 1e-9).
std::vector<double> parse_real_list(const std::string& text);

/// One [section] of a config file. read() leaves `out` alone when the key
/// is missing; finish() rejects keys nobody read.
class ConfigSection {
 public:
  ConfigSection(std::string name, std::map<std::string, std::string> values);

  void read(const std::string& key, bool& out);
  void read(const std::string& key, int& out);
  void read(const std::string& key, std::uint64_t& out);
  void read(const std::string& key, double& out);
  void read(const std::string& key, std::string& out);
  void read(const std::string& key, std::vector<double>& out);
  void read(const std::string& key, std::vector<int>& out);
  void read(const std::string& key, std::vector<std::string>& out);
  void finish() const;

 private:
  const std::string* take(const std::string& key);
  [[nodiscard]] std::string where(const std::string& key) const;

  std::string name_;
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

/// Parses the sectioned text into sections (quotes stripped). Keys outside
/// a section and sections not in `known` are errors.
std::map<std::string, ConfigSection> parse_config_sections(const std::string& text, const std::set<std::string>& known);

}  // namespace vsmo
