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
#include <numbers>

#include "core/feature_stats.hpp"
#include "core/lroc.hpp"

namespace vsmo {
namespace {

ClassStats make_stats(const Vector& delta, const Matrix& k) {
  ClassStats s;
  s.mean_present = delta;
  s.mean_absent = Vector::Zero(delta.size());
  s.covariance = k;
  s.n_present = s.n_absent = 100;
  return s;
}

TEST(Masks, IndicesAndSizes) {
  EXPECT_EQ(full_mask(3), 7u);
  EXPECT_EQ(mask_indices(0b1010), (std::vector<int>{1, 3}));
  EXPECT_EQ(mask_size(0b1011), 3);
}

TEST(ClassStats, HandComputedPooledCovariance) {
  Matrix p(6, 2), a(6, 2);
  p << 1, 2, 2, 1, 3, 5, 4, 3, 0, 1, 2, 0;
  a << 0, 0, 1, 1, -1, 2, 2, -1, 0, 3, 1, 1;
  const ClassStats s = estimate_class_stats(p, a);
  // Means: p = (2, 2), a = (0.5, 1).
  EXPECT_NEAR(s.mean_present(0), 2.0, 1e-14);
  EXPECT_NEAR(s.mean_present(1), 2.0, 1e-14);
  EXPECT_NEAR(s.mean_absent(0), 0.5, 1e-14);
  EXPECT_NEAR(s.mean_absent(1), 1.0, 1e-14);
  // Centred sums of squares and cross products, pooled over 6 + 6 - 2 df.
  double sxx = 0, syy = 0, sxy = 0;
  for (int i = 0; i < 6; ++i) {
    sxx += (p(i, 0) - 2) * (p(i, 0) - 2) + (a(i, 0) - 0.5) * (a(i, 0) - 0.5);
    syy += (p(i, 1) - 2) * (p(i, 1) - 2) + (a(i, 1) - 1) * (a(i, 1) - 1);
    sxy += (p(i, 0) - 2) * (p(i, 1) - 2) + (a(i, 0) - 0.5) * (a(i, 1) - 1);
  }
  EXPECT_DOUBLE_EQ(sxx, 10.0 + 5.5);
  EXPECT_NEAR(s.covariance(0, 0), sxx / 10, 1e-14);
  EXPECT_NEAR(s.covariance(1, 1), syy / 10, 1e-14);
  EXPECT_NEAR(s.covariance(0, 1), sxy / 10, 1e-14);
  EXPECT_EQ(s.covariance(0, 1), s.covariance(1, 0));
}

TEST(ClassStats, EqualClassesAndDuplication) {
  Rng rng(1);
  std::normal_distribution<double> n(0, 1);
  Matrix x(20, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = n(rng);
  EXPECT_NEAR(estimate_class_stats(x, x).delta().norm(), 0.0, 1e-15);

  Matrix y(20, 3);
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = n(rng) + 1.0;
  Matrix x2(40, 3), y2(40, 3);
  x2 << x, x;
  y2 << y, y;
  const ClassStats s1 = estimate_class_stats(x, y);
  const ClassStats s2 = estimate_class_stats(x2, y2);
  EXPECT_TRUE(s1.mean_present.isApprox(s2.mean_present, 1e-14));
  EXPECT_TRUE(s1.mean_absent.isApprox(s2.mean_absent, 1e-14));
  // Twice the scatter over (2N - 2) instead of (N - 2) degrees of freedom.
  const double n_total = 40.0;
  EXPECT_TRUE(s2.covariance.isApprox(s1.covariance * 2 * (n_total - 2) / (2 * n_total - 2), 1e-12));
}

TEST(ClassStats, ShortfallIsReported) {
  Matrix p(3, 4), a(10, 4);
  p.setRandom();
  a.setRandom();
  try {
    (void)estimate_class_stats(p, a);
    FAIL();
  } catch (const DegenerateStatsError& e) {
    EXPECT_EQ(e.code(), ErrorCode::degenerate_stats);
    EXPECT_EQ(e.shortfall(), 2);
  }
  EXPECT_NO_THROW((void)estimate_class_stats(p, a, CovarianceModel::diagonal));
}

TEST(Snr, ScalarAndTwoByTwoOracles) {
  Vector d0 = Vector::Zero(2);
  const SnrReport zero = snr(make_stats(d0, Matrix::Identity(2, 2)), full_mask(2));
  EXPECT_EQ(zero.snr, 0.0);
  EXPECT_EQ(zero.auc_predicted, 0.5);

  Vector d1(1);
  d1 << 2.0;
  Matrix k1(1, 1);
  k1 << 4.0;
  EXPECT_NEAR(snr(make_stats(d1, k1), 1).snr, 1.0, 1e-14);

  const double rho = 0.5;
  Vector d2(2);
  d2 << 1.0, 1.0;
  Matrix k2(2, 2);
  k2 << 1, rho, rho, 1;
  const SnrReport r = snr(make_stats(d2, k2), full_mask(2));
  EXPECT_NEAR(r.snr * r.snr, 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.auc_predicted, normal_cdf(r.snr / std::numbers::sqrt2), 1e-12);
}

TEST(Snr, SingularSubBlockIsAConditioningError) {
  Vector d(2);
  d << 1.0, 1.0;
  Matrix k(2, 2);
  k << 1, 1, 1, 1;
  try {
    (void)snr(make_stats(d, k), full_mask(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::conditioning);
  }
  EXPECT_GT(condition_number(k), kConditionCap);
  EXPECT_LT(condition_number(regularized(k)), kConditionCap);
}

TEST(Snr, GrowingTheMaskNeverLowersSnr) {
  Rng rng(3);
  std::normal_distribution<double> n(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix a(5, 5);
    for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = n(rng);
    const Matrix k = a * a.transpose() + 0.1 * Matrix::Identity(5, 5);
    Vector d(5);
    for (int i = 0; i < 5; ++i) d(i) = n(rng);
    const ClassStats s = make_stats(d, k);
    for (FeatureMask m = 1; m < 32; ++m)
      for (int bit = 0; bit < 5; ++bit) {
        const FeatureMask bigger = m | (1U << bit);
        ASSERT_GE(snr(s, bigger).snr, snr(s, m).snr - 1e-10);
      }
  }
}

TEST(SnrAuc, KnownValuesRoundTripAndDomain) {
  EXPECT_EQ(auc_from_snr(0.0), 0.5);
  EXPECT_NEAR(auc_from_snr(std::numbers::sqrt2), 0.8413447460685429, 1e-15);
  for (double x = 0.0; x <= 5.0; x += 0.01) ASSERT_NEAR(snr_from_auc(auc_from_snr(x)), x, 1e-8);
  for (double a = 0.5 + 1e-6; a < 1.0 - 1e-6; a += 0.00731) ASSERT_NEAR(auc_from_snr(snr_from_auc(a)), a, 1e-10);
  EXPECT_GT(snr_from_auc(1.0 - 1e-15), 10.0);
  EXPECT_THROW((void)snr_from_auc(1.0), Error);
  EXPECT_THROW((void)snr_from_auc(0.4), Error);
  EXPECT_THROW((void)auc_from_snr(-1.0), Error);
}

TEST(GaussianRatings, EmpiricalAucMatchesPhi) {
  Rng rng(4);
  std::normal_distribution<double> n(0, 1);
  for (double s : {0.0, 1.0, std::numbers::sqrt2, 2.0}) {
    std::vector<double> pres(100000), abs(100000);
    for (auto& v : pres) v = n(rng) + s;
    for (auto& v : abs) v = n(rng);
    EXPECT_NEAR(roc_auc(pres, abs), auc_from_snr(s), 0.005) << s;
  }
}

ClassStats pair_stats(const FeaturePairSamples& f) { return estimate_class_stats(f.present, f.absent); }

TEST(FeaturePair, IndependentFeaturesAddSnrSquared) {
  Rng rng(5);
  const auto f = simulate_feature_pair(1.0, 1.0, 0.0, 100000, rng);
  EXPECT_NEAR(snr(pair_stats(f), 3).snr, std::numbers::sqrt2, 0.03 * std::numbers::sqrt2);
  EXPECT_NEAR(pair_snr(1.0, 1.0, 0.0), std::numbers::sqrt2, 1e-15);
}

TEST(FeaturePair, SampleCorrelationAndAnalyticSnr) {
  Rng rng(6);
  for (double rho : {0.0, 0.3, 0.8, 0.95}) {
    const auto f = simulate_feature_pair(1.0, 0.5, rho, 100000, rng);
    const ClassStats s = pair_stats(f);
    const double r = s.covariance(0, 1) / std::sqrt(s.covariance(0, 0) * s.covariance(1, 1));
    EXPECT_NEAR(r, rho, 0.01);
    const double expected = pair_snr(1.0, 0.5, rho);
    EXPECT_NEAR(snr(s, 3).snr, expected, 0.03 * expected);
  }
  EXPECT_THROW((void)simulate_feature_pair(1, 1, 1.0, 10, rng), Error);
}

TEST(FeaturePair, SameSnrWinsAtLowCorrelationAndLosesNearOne) {
  // Same pair (a, a) against (a, a/2): crossover at rho = (a + b) / 2a = 0.75.
  EXPECT_GT(pair_snr(1, 1, 0.1), pair_snr(1, 0.5, 0.1));
  EXPECT_GT(pair_snr(1, 1, 0.3), pair_snr(1, 0.5, 0.3));
  EXPECT_LT(pair_snr(1, 1, 0.8), pair_snr(1, 0.5, 0.8));
  EXPECT_LT(pair_snr(1, 1, 0.95), pair_snr(1, 0.5, 0.95));
  EXPECT_NEAR(pair_snr(1, 1, 0.75), pair_snr(1, 0.5, 0.75), 1e-12);
}

TEST(RefineRule, Regions) {
  EXPECT_TRUE(rule_allows(1.0, 0.9, 0.1));
  EXPECT_FALSE(rule_allows(1.0, 0.2, 0.1));
  EXPECT_FALSE(rule_allows(1.0, 0.9, 0.9));
  EXPECT_TRUE(rule_allows(1.0, 0.2, 0.9));
  EXPECT_TRUE(rule_allows(1.0, 0.2, 0.5));
  EXPECT_TRUE(rule_allows(1.0, 0.2, -0.5));
}

TEST(Refine, IdentityAtFullSize) {
  const FeatureBank bank = default_bank().subset(std::vector<int>{0, 1, 2, 3});
  Matrix k = Matrix::Identity(4, 4);
  Vector d(4);
  d << 1, 2, 3, 4;
  EXPECT_EQ(refine_bank(bank, make_stats(d, k), 4), bank);
}

TEST(Refine, DuplicateFeatureDoesNotSurvive) {
  Vector d(3);
  d << 2.0, 2.0, 1.5;
  Matrix k(3, 3);
  k << 1, 1, 0, 1, 1, 0, 0, 0, 1;
  const auto r = refine_feature_indices(make_stats(d, k), 2);
  EXPECT_EQ(r.indices, (std::vector<int>{0, 2}));
}

TEST(Refine, InvariantToPerFeatureRescaling) {
  Rng rng(7);
  std::normal_distribution<double> n(0, 1);
  Matrix a(8, 8);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = n(rng);
  const Matrix k = a * a.transpose() + 0.5 * Matrix::Identity(8, 8);
  Vector d(8);
  for (int i = 0; i < 8; ++i) d(i) = n(rng);
  Vector scale(8);
  for (int i = 0; i < 8; ++i) scale(i) = std::exp(n(rng) * 2);
  const Matrix ks = scale.asDiagonal() * k * scale.asDiagonal();
  const Vector ds = scale.cwiseProduct(d);
  EXPECT_EQ(refine_feature_indices(make_stats(d, k), 5).indices, refine_feature_indices(make_stats(ds, ks), 5).indices);
}

TEST(Refine, DefaultBankOnSimulationGivesTwelve) {
  const auto cases = generate_dataset(PhantomSpec{}, PinholeSpec{}, 60, 60, 31);
  const FeatureBank out = refine_bank(default_bank(), cases, 12);
  EXPECT_EQ(out.size(), 12u);
  for (const auto& s : out.specs()) {
    const auto& all = default_bank().specs();
    EXPECT_NE(std::find(all.begin(), all.end(), s), all.end());
  }
}

}  // namespace
}  // namespace vsmo
