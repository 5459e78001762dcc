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

#include "core/lroc.hpp"
#include "support/oracles.hpp"

namespace vsmo {
namespace {

LrocCase present(double rating, Pixel reported, Pixel truth = {50, 50}) {
  return {"p", true, truth, rating, reported};
}
LrocCase absent(double rating) { return {"a", false, std::nullopt, rating, Pixel{0, 0}}; }

TEST(RocAuc, Examples) {
  const std::vector<double> same{1, 2, 3};
  EXPECT_EQ(roc_auc(same, same), 0.5);
  EXPECT_EQ(roc_auc(std::vector<double>{5, 6}, std::vector<double>{1, 2}), 1.0);
  EXPECT_EQ(roc_auc(std::vector<double>{3, 1}, std::vector<double>{2, 0}), 0.75);
  try {
    (void)roc_auc(std::vector<double>{}, same);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::invalid_input);
  }
}

TEST(Localization, ClosedBall) {
  EXPECT_TRUE(localization_correct(Pixel{3, 4}, Pixel{3, 4}, 9.4));
  EXPECT_TRUE(localization_correct(Pixel{0, 0}, Pixel{3, 4}, 5.0));
  EXPECT_FALSE(localization_correct(Pixel{0, 0}, Pixel{3, 4}, std::nextafter(5.0, 0.0)));
}

TEST(LrocAuc, GateClosedAndOpen) {
  LrocDataset d{present(5, {90, 90}), present(3, {80, 10}), absent(1), absent(4)};
  EXPECT_EQ(lroc_auc(d, 9.4), 0.0);
  LrocDataset e{present(5, {50, 50}), present(3, {52, 51}), absent(1), absent(4), absent(3)};
  EXPECT_EQ(lroc_auc(e, 9.4), roc_auc(e));
}

TEST(LrocAuc, HandDatasetMatchesPairEnumeration) {
  // 4 present / 4 absent with mixed localization: 16 pairs.
  LrocDataset d{present(0.9, {50, 50}), present(0.4, {70, 50}), present(0.6, {55, 55}), present(kSentinelRating, {50, 50}),
                absent(0.5), absent(0.6), absent(kSentinelRating), absent(0.1)};
  // Localized: 0.9 (beats 4, credit 4), 0.6 (beats 0.5, sentinel, 0.1; ties 0.6: 3.5),
  // sentinel at truth (ties the absent sentinel: 0.5). 0.4 is 20 px off.
  EXPECT_EQ(lroc_auc(d, 9.4), (4 + 3.5 + 0.5) / 16.0);
  EXPECT_EQ(lroc_auc(d, 9.4), oracle::lroc_by_pairs(d, 9.4));
}

TEST(LrocAuc, SmallDatasetsMatchBruteForceExactly) {
  const long n = oracle::for_each_small_dataset(3, 3, [](const LrocDataset& d) {
    ASSERT_EQ(lroc_auc(d, 9.4), oracle::lroc_by_pairs(d, 9.4));
    ASSERT_LE(lroc_auc(d, 9.4), roc_auc(d));
  });
  EXPECT_GT(n, 10000);
}

TEST(LrocAuc, InvariantToMonotoneTransforms) {
  Rng rng(8);
  std::normal_distribution<double> g(0, 1);
  std::uniform_int_distribution<int> off(0, 20);
  for (int t = 0; t < 50; ++t) {
    LrocDataset d;
    for (int i = 0; i < 30; ++i) d.push_back(present(g(rng) + 1, {50 + off(rng), 50}));
    for (int i = 0; i < 30; ++i) d.push_back(absent(g(rng)));
    d[3].rating = kSentinelRating;
    d[40].rating = kSentinelRating;
    LrocDataset e = d;
    for (auto& c : e) c.rating = c.rating == kSentinelRating ? -1e300 : std::exp(3 * c.rating) + 7;
    ASSERT_EQ(lroc_auc(d, 9.4), lroc_auc(e, 9.4));
    ASSERT_EQ(roc_auc(d), roc_auc(e));
    ASSERT_LE(lroc_auc(d, 9.4), roc_auc(d));
  }
}

TEST(StandardError, Examples) {
  const std::vector<double> flat(5, 0.7);
  EXPECT_EQ(auc_standard_error(flat).se, 0.0);
  const auto two = auc_standard_error(std::vector<double>{0.8, 0.9});
  EXPECT_NEAR(two.auc, 0.85, 1e-15);
  EXPECT_NEAR(two.se, 0.05, 1e-15);
  EXPECT_EQ(two.n_trials, 2);
  const std::vector<double> ten{0.81, 0.77, 0.9, 0.85, 0.79, 0.83, 0.88, 0.8, 0.86, 0.82};
  double mean = 0;
  for (double v : ten) mean += v;
  mean /= 10;
  double ss = 0;
  for (double v : ten) ss += (v - mean) * (v - mean);
  EXPECT_NEAR(auc_standard_error(ten).se, std::sqrt(ss / 9) / std::sqrt(10.0), 1e-12);
  EXPECT_THROW((void)auc_standard_error(std::vector<double>{0.8}), Error);
}

TEST(ResultsCsv, RoundTrip) {
  LrocDataset d{present(1.25, {10, 11}, {12, 13}), {"b", true, Pixel{5, 6}, kSentinelRating, std::nullopt}, absent(0.1)};
  d[2].reported_location = Pixel{7, 8};
  const std::string text = write_results_csv(d);
  EXPECT_EQ(text.substr(0, text.find('\n')), "case_id,truth,true_x,true_y,rating,x,y");
  const LrocDataset back = parse_results_csv(text);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back[i].id, d[i].id);
    EXPECT_EQ(back[i].lesion_present, d[i].lesion_present);
    EXPECT_EQ(back[i].true_location, d[i].true_location);
    EXPECT_EQ(back[i].rating, d[i].rating);
    EXPECT_EQ(back[i].reported_location, d[i].reported_location);
  }
  EXPECT_THROW((void)parse_results_csv("id,truth\n"), Error);
  EXPECT_THROW((void)parse_results_csv(results_csv_header() + "\nx,1,,,0.5,,\n"), Error);
}

}  // namespace
}  // namespace vsmo
