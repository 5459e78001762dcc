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

// Experiment drivers.
//
// Seeds are derived by label: master -> experiment -> condition -> set, so
// adding a diameter, training size or trial leaves every existing stream
// untouched. All variants of one condition see the same images.
//
// Per condition, a design set (fixed across trials) refines the bank and
// picks the stage features of each variant; each trial then trains the
// discriminants and thresholds on its own training set.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/lroc.hpp"

namespace vsmo {

using ProgressFn = std::function<void(const std::string&)>;

struct DesignedObserver {
  FeatureBank bank;       // refined bank the feature indices refer to
  ObserverConfig config;  // with the chosen search/decision features
  StageSelection selection;
};

/// Refines the configured bank to refined_bank_size on `design`.
FeatureBank refine_for(std::span<const Case> design, const ExperimentConfig& config);

/// Chooses the stage features of `variant` on `design`.
DesignedObserver design_observer(std::span<const Case> design, std::shared_ptr<const FeatureEngine> refined,
                                 const ExperimentConfig& config, const ObserverVariant& variant);

struct CellStatus {
  bool ok = true;
  std::string error;
};

struct SweepRow {
  double diameter = 0.0;
  std::string variant;
  std::uint64_t seed = 0;
  std::string bank_hash;
  std::vector<int> search_features;
  std::vector<int> decision_features;
  std::vector<double> trial_lroc;
  std::vector<double> trial_roc;
  AucSummary lroc;  // se is NaN with a single trial
  double roc_auc = 0.0;
  CellStatus status;
};

struct SweepReport {
  std::string config_hash;
  double radius = 0.0;
  std::vector<SweepRow> rows;  // diameter-major, variants in config order

  [[nodiscard]] int failures() const;
  [[nodiscard]] std::string csv() const;
  [[nodiscard]] std::string trials_csv() const;
};

SweepReport run_pinhole_sweep(const ExperimentConfig& config, const ProgressFn& progress = {});

struct TrainingStudyRow {
  int train_pairs = 0;
  std::string variant;
  std::uint64_t seed = 0;
  std::string bank_hash;
  std::vector<double> trial_lroc;
  AucSummary lroc;
  CellStatus status;
};

struct TrainingStudyReport {
  std::string config_hash;
  double radius = 0.0;
  double diameter = 0.0;
  std::vector<TrainingStudyRow> rows;  // size-major, variants in config order

  [[nodiscard]] int failures() const;
  [[nodiscard]] std::string csv() const;
  [[nodiscard]] std::string trials_csv() const;
};

TrainingStudyReport run_training_size_study(const ExperimentConfig& config, const ProgressFn& progress = {});

/// Same-SNR pair (a, a) against different-SNR pair (a, a/2).
struct CorrelationRow {
  double rho = 0.0;
  std::string pair;  // "same-snr" or "different-snr"
  std::uint64_t seed = 0;
  double snr_a = 0.0;
  double snr_b = 0.0;
  double analytic_snr = 0.0;
  double empirical_snr = 0.0;
  double analytic_auc = 0.0;
  double empirical_auc = 0.0;
};

struct CorrelationReport {
  std::string config_hash;
  std::vector<CorrelationRow> rows;  // rho-major, same-snr first

  [[nodiscard]] std::string csv() const;
};

CorrelationReport run_correlation_study(const ExperimentConfig& config, const ProgressFn& progress = {});

/// Summary of one or more per-case results files (one per trial).
struct ScoreSummary {
  std::string condition;
  AucSummary lroc;  // se is NaN with a single file
  double roc_auc = 0.0;
  double radius = 0.0;
};
ScoreSummary score_results(const std::vector<LrocDataset>& trials, double radius, const std::string& condition);
std::string score_summary_csv(const std::vector<ScoreSummary>& rows);

/// Writes sweep.csv / sweep_trials.csv (and the like) under output_dir.
void write_report(const std::string& output_dir, const SweepReport& report);
void write_report(const std::string& output_dir, const TrainingStudyReport& report);
void write_report(const std::string& output_dir, const CorrelationReport& report);

/// Shortest round-trip decimal text.
std::string format_real(double v);

}  // namespace vsmo
