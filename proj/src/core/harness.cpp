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

#include "core/harness.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <limits>

#include "core/io.hpp"

namespace vsmo {

std::string format_real(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string join_ints(const std::vector<int>& v, char sep = ' ') {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(v[i]);
  }
  return out;
}

// Errors may hold commas or quotes.
std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

void report(const ProgressFn& progress, const std::string& msg) {
  if (progress) progress(msg);
}

AucSummary summarize(const std::vector<double>& aucs) {
  if (aucs.size() >= 2) return auc_standard_error(aucs);
  return {aucs.empty() ? kNaN : aucs.front(), kNaN, static_cast<int>(aucs.size())};
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? kNaN : s / static_cast<double>(v.size());
}

std::vector<Case> make_set(const ExperimentConfig& config, double diameter, int pairs, std::uint64_t seed) {
  PinholeSpec pinhole = config.pinhole;
  pinhole.relative_diameter = diameter;
  return generate_dataset(config.phantom, pinhole, pairs, pairs, seed, config.threads);
}

std::string condition_label(double diameter) { return "d=" + format_real(diameter); }

}  // namespace

FeatureBank refine_for(std::span<const Case> design, const ExperimentConfig& config) {
  return refine_bank(config.bank(), design, config.refined_bank_size);
}

DesignedObserver design_observer(std::span<const Case> design, std::shared_ptr<const FeatureEngine> refined,
                                 const ExperimentConfig& config, const ObserverVariant& variant) {
  DesignedObserver d;
  d.bank = refined->bank();
  d.config = config.observer_base(variant);
  d.selection = select_stage_features(design, *refined, d.config, config.features_per_stage, variant.stage_specific,
                                      config.threads);
  d.config.search_features = d.selection.search;
  d.config.decision_features = d.selection.decision;
  return d;
}

// ---------------------------------------------------------------------------
// Pinhole sweep

int SweepReport::failures() const {
  int n = 0;
  for (const auto& r : rows) n += r.status.ok ? 0 : 1;
  return n;
}

std::string SweepReport::csv() const {
  std::string out =
      "config_hash,seed,bank_hash,variant,radius,condition,diameter,auc,se,n_trials,roc_auc,search_features,"
      "decision_features,status,error\n";
  for (const auto& r : rows) {
    out += config_hash + "," + std::to_string(r.seed) + "," + r.bank_hash + "," + r.variant + "," + format_real(radius) +
           "," + condition_label(r.diameter) + "," + format_real(r.diameter) + ",";
    if (r.status.ok)
      out += format_real(r.lroc.auc) + "," + format_real(r.lroc.se) + "," + std::to_string(r.lroc.n_trials) + "," +
             format_real(r.roc_auc) + "," + join_ints(r.search_features) + "," + join_ints(r.decision_features) +
             ",ok,\n";
    else
      out += ",,0,,,,failed," + csv_quote(r.status.error) + "\n";
  }
  return out;
}

std::string SweepReport::trials_csv() const {
  std::string out = "config_hash,seed,bank_hash,variant,radius,condition,diameter,trial,auc,roc_auc\n";
  for (const auto& r : rows)
    for (std::size_t t = 0; t < r.trial_lroc.size(); ++t)
      out += config_hash + "," + std::to_string(r.seed) + "," + r.bank_hash + "," + r.variant + "," +
             format_real(radius) + "," + condition_label(r.diameter) + "," + format_real(r.diameter) + "," +
             std::to_string(t) + "," + format_real(r.trial_lroc[t]) + "," + format_real(r.trial_roc[t]) + "\n";
  return out;
}

SweepReport run_pinhole_sweep(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  SweepReport rep;
  rep.config_hash = config.hash();
  rep.radius = config.localization_radius;
  const std::uint64_t experiment = derive_seed(config.seed, "sweep");

  for (double d : config.diameters) {
    const std::uint64_t cell = derive_seed(experiment, condition_label(d));
    const std::size_t first = rep.rows.size();
    for (const auto& v : config.variants) {
      SweepRow row;
      row.diameter = d;
      row.variant = v.name;
      row.seed = cell;
      rep.rows.push_back(std::move(row));
    }
    auto fail_all = [&](const std::string& what) {
      for (std::size_t i = first; i < rep.rows.size(); ++i)
        if (rep.rows[i].status.ok) rep.rows[i].status = {false, what};
    };

    try {
      report(progress, "sweep " + condition_label(d) + ": design set");
      const auto design = make_set(config, d, config.design_pairs, derive_seed(cell, "design"));
      auto engine = std::make_shared<const FeatureEngine>(refine_for(design, config), config.phantom.width,
                                                          config.phantom.height);
      const std::string bank_hash = engine->bank().hash();
      std::vector<std::optional<DesignedObserver>> designs(config.variants.size());
      for (std::size_t k = 0; k < config.variants.size(); ++k) {
        auto& row = rep.rows[first + k];
        row.bank_hash = bank_hash;
        try {
          designs[k] = design_observer(design, engine, config, config.variants[k]);
          row.search_features = designs[k]->config.search_features;
          row.decision_features = designs[k]->config.decision_features;
        } catch (const std::exception& e) {
          row.status = {false, e.what()};
        }
      }
      for (int t = 0; t < config.trials; ++t) {
        report(progress, "sweep " + condition_label(d) + ": trial " + std::to_string(t));
        const std::string tag = std::to_string(t);
        const auto train = make_set(config, d, config.train_pairs, derive_seed(cell, "train/" + tag));
        const auto test = make_set(config, d, config.test_pairs, derive_seed(cell, "test/" + tag));
        for (std::size_t k = 0; k < config.variants.size(); ++k) {
          auto& row = rep.rows[first + k];
          if (!row.status.ok) continue;
          try {
            const auto obs = train_observer(train, engine, designs[k]->config, config.threads);
            const auto results = evaluate_cases(obs, test, config.threads);
            row.trial_lroc.push_back(lroc_auc(results, config.localization_radius));
            row.trial_roc.push_back(roc_auc(results));
          } catch (const std::exception& e) {
            row.status = {false, "trial " + tag + ": " + e.what()};
          }
        }
      }
      for (std::size_t k = 0; k < config.variants.size(); ++k) {
        auto& row = rep.rows[first + k];
        if (!row.status.ok) continue;
        row.lroc = summarize(row.trial_lroc);
        row.roc_auc = mean(row.trial_roc);
      }
    } catch (const std::exception& e) {
      fail_all(e.what());
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Training-size study

int TrainingStudyReport::failures() const {
  int n = 0;
  for (const auto& r : rows) n += r.status.ok ? 0 : 1;
  return n;
}

std::string TrainingStudyReport::csv() const {
  std::string out = "config_hash,seed,bank_hash,variant,radius,condition,diameter,train_pairs,auc,se,n_trials,status,error\n";
  for (const auto& r : rows) {
    out += config_hash + "," + std::to_string(r.seed) + "," + r.bank_hash + "," + r.variant + "," + format_real(radius) +
           "," + condition_label(diameter) + "," + format_real(diameter) + "," + std::to_string(r.train_pairs) + ",";
    if (r.status.ok)
      out += format_real(r.lroc.auc) + "," + format_real(r.lroc.se) + "," + std::to_string(r.lroc.n_trials) + ",ok,\n";
    else
      out += ",," + std::to_string(r.trial_lroc.size()) + ",failed," + csv_quote(r.status.error) + "\n";
  }
  return out;
}

std::string TrainingStudyReport::trials_csv() const {
  std::string out = "config_hash,seed,bank_hash,variant,radius,condition,diameter,train_pairs,trial,auc\n";
  for (const auto& r : rows)
    for (std::size_t t = 0; t < r.trial_lroc.size(); ++t)
      out += config_hash + "," + std::to_string(r.seed) + "," + r.bank_hash + "," + r.variant + "," +
             format_real(radius) + "," + condition_label(diameter) + "," + format_real(diameter) + "," +
             std::to_string(r.train_pairs) + "," + std::to_string(t) + "," + format_real(r.trial_lroc[t]) + "\n";
  return out;
}

TrainingStudyReport run_training_size_study(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  TrainingStudyReport rep;
  rep.config_hash = config.hash();
  rep.radius = config.localization_radius;
  rep.diameter = config.study_diameter;
  const std::uint64_t experiment = derive_seed(config.seed, "training-study");
  const double d = config.study_diameter;

  for (int m : config.study_sizes)
    for (const auto& v : config.variants) {
      TrainingStudyRow row;
      row.train_pairs = m;
      row.variant = v.name;
      row.seed = derive_seed(experiment, "M=" + std::to_string(m));
      rep.rows.push_back(std::move(row));
    }
  const std::size_t nv = config.variants.size();

  std::shared_ptr<const FeatureEngine> engine;
  std::vector<std::optional<DesignedObserver>> designs(nv);
  std::vector<std::string> design_error(nv);
  std::vector<Case> test;
  try {
    report(progress, "training study: design and test sets");
    const auto design = make_set(config, d, config.study_design_pairs, derive_seed(experiment, "design"));
    engine = std::make_shared<const FeatureEngine>(refine_for(design, config), config.phantom.width,
                                                   config.phantom.height);
    for (std::size_t k = 0; k < nv; ++k) {
      try {
        designs[k] = design_observer(design, engine, config, config.variants[k]);
      } catch (const std::exception& e) {
        design_error[k] = e.what();
      }
    }
    test = make_set(config, d, config.study_test_pairs, derive_seed(experiment, "test"));
  } catch (const std::exception& e) {
    for (auto& r : rep.rows) r.status = {false, e.what()};
    return rep;
  }
  const std::string bank_hash = engine->bank().hash();

  for (std::size_t i = 0; i < config.study_sizes.size(); ++i) {
    const int m = config.study_sizes[i];
    for (std::size_t k = 0; k < nv; ++k) {
      auto& row = rep.rows[i * nv + k];
      row.bank_hash = bank_hash;
      if (!designs[k]) row.status = {false, design_error[k]};
    }
    for (int t = 0; t < config.study_trials; ++t) {
      report(progress, "training study: M=" + std::to_string(m) + " trial " + std::to_string(t));
      const auto train = make_set(config, d, m, derive_seed(rep.rows[i * nv].seed, "train/" + std::to_string(t)));
      for (std::size_t k = 0; k < nv; ++k) {
        auto& row = rep.rows[i * nv + k];
        if (!row.status.ok) continue;
        try {
          const auto obs = train_observer(train, engine, designs[k]->config, config.threads);
          row.trial_lroc.push_back(lroc_auc(evaluate_cases(obs, test, config.threads), config.localization_radius));
        } catch (const std::exception& e) {
          row.status = {false, "trial " + std::to_string(t) + ": " + e.what()};
        }
      }
    }
    for (std::size_t k = 0; k < nv; ++k) {
      auto& row = rep.rows[i * nv + k];
      if (!row.status.ok) continue;
      try {
        row.lroc = auc_standard_error(row.trial_lroc);
      } catch (const std::exception& e) {
        row.status = {false, e.what()};
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Correlation study

std::string CorrelationReport::csv() const {
  std::string out =
      "config_hash,seed,bank_hash,variant,radius,rho,snr_a,snr_b,analytic_snr,empirical_snr,analytic_auc,"
      "empirical_auc\n";
  for (const auto& r : rows)
    out += config_hash + "," + std::to_string(r.seed) + ",," + r.pair + ",," + format_real(r.rho) + "," +
           format_real(r.snr_a) + "," + format_real(r.snr_b) + "," + format_real(r.analytic_snr) + "," +
           format_real(r.empirical_snr) + "," + format_real(r.analytic_auc) + "," + format_real(r.empirical_auc) + "\n";
  return out;
}

CorrelationReport run_correlation_study(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  CorrelationReport rep;
  rep.config_hash = config.hash();
  const std::uint64_t experiment = derive_seed(config.seed, "correlation");
  const double a = config.correlation_snr;
  for (double rho : config.correlation_rhos) {
    report(progress, "correlation study: rho=" + format_real(rho));
    for (const auto& [pair, b] : {std::pair<std::string, double>{"same-snr", a}, {"different-snr", a / 2}}) {
      CorrelationRow row;
      row.rho = rho;
      row.pair = pair;
      row.seed = derive_seed(experiment, "rho=" + format_real(rho) + "/" + pair);
      row.snr_a = a;
      row.snr_b = b;
      row.analytic_snr = pair_snr(a, b, rho);
      row.analytic_auc = auc_from_snr(row.analytic_snr);

      Rng rng(row.seed);
      const auto train = simulate_feature_pair(a, b, rho, config.correlation_samples, rng);
      const auto test = simulate_feature_pair(a, b, rho, config.correlation_samples, rng);
      const ClassStats stats = estimate_class_stats(train.present, train.absent);
      row.empirical_snr = snr(stats, full_mask(2)).snr;
      const Vector w = stats.covariance.ldlt().solve(stats.delta());
      const Vector rp = test.present * w, ra = test.absent * w;
      row.empirical_auc = roc_auc(std::span<const double>(rp.data(), static_cast<std::size_t>(rp.size())),
                                  std::span<const double>(ra.data(), static_cast<std::size_t>(ra.size())));
      rep.rows.push_back(row);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Scoring

ScoreSummary score_results(const std::vector<LrocDataset>& trials, double radius, const std::string& condition) {
  require(!trials.empty(), ErrorCode::invalid_input, "no results to score");
  std::vector<double> lroc, roc;
  for (const auto& t : trials) {
    lroc.push_back(lroc_auc(t, radius));
    roc.push_back(roc_auc(t));
  }
  return {condition, summarize(lroc), mean(roc), radius};
}

std::string score_summary_csv(const std::vector<ScoreSummary>& rows) {
  std::string out = "condition,auc,se,n_trials,radius,roc_auc\n";
  for (const auto& r : rows)
    out += csv_quote(r.condition) + "," + format_real(r.lroc.auc) + "," + format_real(r.lroc.se) + "," +
           std::to_string(r.lroc.n_trials) + "," + format_real(r.radius) + "," + format_real(r.roc_auc) + "\n";
  return out;
}

namespace {

std::filesystem::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorCode::io, "cannot create " + dir + ": " + ec.message());
  return dir;
}

}  // namespace

void write_report(const std::string& output_dir, const SweepReport& r) {
  const auto dir = prepare_dir(output_dir);
  write_text_file(dir / "sweep.csv", r.csv());
  write_text_file(dir / "sweep_trials.csv", r.trials_csv());
}

void write_report(const std::string& output_dir, const TrainingStudyReport& r) {
  const auto dir = prepare_dir(output_dir);
  write_text_file(dir / "training_study.csv", r.csv());
  write_text_file(dir / "training_study_trials.csv", r.trials_csv());
}

void write_report(const std::string& output_dir, const CorrelationReport& r) {
  write_text_file(prepare_dir(output_dir) / "correlation.csv", r.csv());
}

}  // namespace vsmo
