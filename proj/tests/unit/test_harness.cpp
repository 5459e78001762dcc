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

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "core/harness.hpp"
#include "core/io.hpp"
#include "support/tempdir.hpp"

namespace vsmo {
namespace {

// Small images and a 4-filter bank keep every experiment under a few seconds.
ExperimentConfig tiny() {
  return parse_experiment_config(R"(
[experiment]
seed = 99
[phantom]
width = 64
height = 64
lump_mean = 12
[bank]
widths = 7
freqs = 0.0714285714285714
thetas = 0, 1.5707963267949
phis = 0, 1.5707963267949
refined_size = 4
[observer]
features_per_stage = 2
[sweep]
diameters = 0.6, 1.0
design_pairs = 12
train_pairs = 12
test_pairs = 10
trials = 2
[training_study]
diameter = 1.0
sizes = 10, 14
trials = 2
test_pairs = 10
design_pairs = 12
[correlation]
rhos = 0, 0.5
samples = 2000
)");
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

TEST(Sweep, ShapeAndDeterminism) {
  ExperimentConfig c = tiny();
  const auto a = run_pinhole_sweep(c);
  ASSERT_EQ(a.rows.size(), 8u);
  EXPECT_EQ(a.failures(), 0) << a.csv();
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].variant, c.variants[i % 4].name);
    EXPECT_EQ(a.rows[i].diameter, c.diameters[i / 4]);
    EXPECT_EQ(a.rows[i].trial_lroc.size(), 2u);
    EXPECT_GE(a.rows[i].lroc.auc, 0.0);
    EXPECT_LE(a.rows[i].lroc.auc, a.rows[i].roc_auc + 1e-12);
    EXPECT_TRUE(std::isfinite(a.rows[i].lroc.se));
    EXPECT_EQ(a.rows[i].search_features.size(), 2u);
  }
  c.threads = 3;
  c.output_dir = "somewhere";
  const auto b = run_pinhole_sweep(c);
  EXPECT_EQ(a.csv(), b.csv());
  EXPECT_EQ(a.trials_csv(), b.trials_csv());
  const auto rows = lines(a.csv());
  ASSERT_EQ(rows.size(), 9u);
  EXPECT_EQ(rows[0].substr(0, 35), "config_hash,seed,bank_hash,variant,");
  EXPECT_EQ(lines(a.trials_csv()).size(), 17u);
}

TEST(Sweep, AddingAConditionLeavesOthersAlone) {
  ExperimentConfig one = tiny();
  one.diameters = {1.0};
  one.trials = 1;
  ExperimentConfig two = one;
  two.diameters = {0.6, 1.0};
  const auto a = run_pinhole_sweep(one);
  const auto b = run_pinhole_sweep(two);
  ASSERT_EQ(b.rows.size(), 8u);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(a.rows[k].seed, b.rows[4 + k].seed);
    EXPECT_EQ(a.rows[k].trial_lroc, b.rows[4 + k].trial_lroc);
    EXPECT_TRUE(std::isnan(a.rows[k].lroc.se));
  }
}

TEST(Sweep, VariantsShareImagesAndDesign) {
  const auto a = run_pinhole_sweep(tiny());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].seed, a.rows[i - i % 4].seed);
    EXPECT_EQ(a.rows[i].bank_hash, a.rows[i - i % 4].bank_hash);
  }
  EXPECT_NE(a.rows[0].seed, a.rows[4].seed);
}

TEST(Sweep, FailedCellsAreReported) {
  ExperimentConfig c = tiny();
  c.design_pairs = 1;  // too few for any class statistics
  c.diameters = {1.0};
  const auto r = run_pinhole_sweep(c);
  EXPECT_EQ(r.failures(), 4) << r.csv();
  EXPECT_NE(r.csv().find(",failed,"), std::string::npos);
}

TEST(TrainingStudy, ShapeAndStandardError) {
  ExperimentConfig c = tiny();
  const auto r = run_training_size_study(c);
  ASSERT_EQ(r.rows.size(), 8u);
  EXPECT_EQ(r.failures(), 0) << r.csv();
  EXPECT_EQ(r.rows[0].train_pairs, 10);
  EXPECT_EQ(r.rows[4].train_pairs, 14);
  for (const auto& row : r.rows) {
    EXPECT_EQ(row.lroc.n_trials, 2);
    EXPECT_TRUE(std::isfinite(row.lroc.se));
  }
  EXPECT_EQ(lines(r.csv()).size(), 9u);
}

TEST(TrainingStudy, SingleTrialHasNoStandardError) {
  ExperimentConfig c = tiny();
  c.study_trials = 1;
  c.study_sizes = {10};
  const auto r = run_training_size_study(c);
  EXPECT_EQ(r.failures(), 4);
}

TEST(Correlation, RowsAgreeWithAnalytic) {
  ExperimentConfig c = tiny();
  c.correlation_samples = 50000;
  const auto r = run_correlation_study(c);
  ASSERT_EQ(r.rows.size(), 4u);
  EXPECT_EQ(r.rows[0].pair, "same-snr");
  EXPECT_EQ(r.rows[1].pair, "different-snr");
  EXPECT_EQ(r.rows[1].snr_b, 0.5);
  for (const auto& row : r.rows) {
    EXPECT_NEAR(row.empirical_snr, row.analytic_snr, 0.05);
    EXPECT_NEAR(row.empirical_auc, row.analytic_auc, 0.01);
  }
  EXPECT_NEAR(r.rows[0].analytic_snr, std::sqrt(2.0), 1e-12);
  EXPECT_EQ(r.csv(), run_correlation_study(c).csv());
}

TEST(Score, SummaryOverTrials) {
  const LrocDataset t1{{"p", true, Pixel{5, 5}, 2.0, Pixel{5, 5}}, {"a", false, std::nullopt, 1.0, Pixel{0, 0}}};
  const LrocDataset t2{{"p", true, Pixel{5, 5}, 0.0, Pixel{5, 5}}, {"a", false, std::nullopt, 1.0, Pixel{0, 0}}};
  const auto s = score_results({t1, t2}, 9.4, "reader-1");
  EXPECT_DOUBLE_EQ(s.lroc.auc, 0.5);
  EXPECT_EQ(s.lroc.n_trials, 2);
  EXPECT_NEAR(s.lroc.se, std::sqrt(0.5) / std::sqrt(2.0), 1e-12);
  const auto single = score_results({t1}, 9.4, "x");
  EXPECT_EQ(single.lroc.auc, 1.0);
  EXPECT_TRUE(std::isnan(single.lroc.se));
  EXPECT_THROW((void)score_results({}, 9.4, "x"), Error);
  const auto csv = score_summary_csv({s});
  EXPECT_EQ(lines(csv)[0], "condition,auc,se,n_trials,radius,roc_auc");
  EXPECT_EQ(lines(csv)[1].substr(0, 13), "reader-1,0.5,");
}

TEST(Reports, WrittenUnderOutputDir) {
  testing_support::TempDir dir;
  ExperimentConfig c = tiny();
  c.correlation_samples = 100;
  write_report((dir / "out").string(), run_correlation_study(c));
  EXPECT_EQ(read_text_file(dir / "out/correlation.csv"), run_correlation_study(c).csv());
}

TEST(Format, ShortestRoundTrip) {
  EXPECT_EQ(format_real(0.1), "0.1");
  EXPECT_EQ(format_real(2.0), "2");
  EXPECT_EQ(std::stod(format_real(1.0 / 3.0)), 1.0 / 3.0);
}

}  // namespace
}  // namespace vsmo
