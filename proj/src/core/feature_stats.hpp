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

// Class statistics of feature vectors, the Hotelling SNR and its AUC
// equivalent, the two-feature correlation model and bank refinement.

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "core/gabor_bank.hpp"
#include "core/phantom_sim.hpp"

namespace vsmo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Bit k selects feature k of an ordered feature list.
using FeatureMask = std::uint32_t;

constexpr FeatureMask full_mask(int n) noexcept {
  return n >= 32 ? ~FeatureMask{0} : ((FeatureMask{1} << n) - 1U);
}
std::vector<int> mask_indices(FeatureMask mask);
int mask_size(FeatureMask mask) noexcept;

inline constexpr double kConditionCap = 1e10;

struct ClassStats {
  Vector mean_present;
  Vector mean_absent;
  Matrix covariance;  // shared by both classes
  int n_present = 0;
  int n_absent = 0;

  [[nodiscard]] int dim() const noexcept { return static_cast<int>(mean_present.size()); }
  [[nodiscard]] Vector delta() const { return mean_present - mean_absent; }
  /// Statistics of the features selected by `mask`, in index order.
  [[nodiscard]] ClassStats restricted(FeatureMask mask) const;
};

enum class CovarianceModel { full, diagonal };

/// Rows of `present` / `absent` are samples. Full covariance needs at least
/// dim + 1 samples per class, diagonal needs 2; otherwise a
/// DegenerateStatsError reports the shortfall.
ClassStats estimate_class_stats(const Matrix& present, const Matrix& absent,
                                CovarianceModel model = CovarianceModel::full);
ClassStats estimate_class_stats(std::span<const FeatureVector> present, std::span<const FeatureVector> absent);

/// lambda_max / lambda_min of a symmetric matrix; +inf when not positive definite.
double condition_number(const Matrix& symmetric);

/// Adds a ridge of 1e-6 * trace / dim when the condition number exceeds `cap`.
Matrix regularized(const Matrix& covariance, double cap = kConditionCap);

struct SnrReport {
  double snr = 0.0;
  double auc_predicted = 0.5;
  FeatureMask subset = 0;
};

/// SNR^2 = delta' K^-1 delta over the masked sub-block. Throws a
/// conditioning error when the sub-block is singular or its condition
/// number exceeds `condition_cap`.
SnrReport snr(const ClassStats& stats, FeatureMask subset, double condition_cap = kConditionCap);

/// Phi(snr / sqrt 2).
double auc_from_snr(double snr);
/// sqrt 2 * Phi^-1(auc), defined for auc in [0.5, 1).
double snr_from_auc(double auc);
double normal_cdf(double z) noexcept;

struct FeaturePairSamples {
  Matrix present;  // n x 2
  Matrix absent;   // n x 2
};

/// Unit-variance bivariate Gaussian features with correlation rho; the
/// present class is shifted by (snr_a, snr_b).
FeaturePairSamples simulate_feature_pair(double snr_a, double snr_b, double rho, int n, Rng& rng);

/// Closed-form combined SNR of the two-feature model above.
double pair_snr(double snr_a, double snr_b, double rho);

/// Correlation cut-offs and SNR similarity used by bank refinement.
struct RefineRule {
  double low_correlation = 0.3;   // below: prefer similar SNRs
  double high_correlation = 0.8;  // above: prefer different SNRs
  /// Two SNRs are "similar" when min/max >= this. 0.6 is where the
  /// two-feature crossover (rho = (a + b) / 2a) sits at rho = 0.8.
  double similar_ratio = 0.6;
};

struct RefineStep {
  int index = 0;
  bool rule_compliant = true;  // false when every remaining feature broke the rule
  double combined_snr = 0.0;   // SNR of the selection after this step
};

struct RefineResult {
  std::vector<int> indices;  // selection order
  std::vector<RefineStep> steps;
  std::vector<double> feature_snr;
  Matrix correlation;
};

/// True when adding a feature with (snr_b, correlation rho) to a selected
/// feature with snr_a agrees with the correlation rule.
bool rule_allows(double snr_a, double snr_b, double rho, const RefineRule& rule = {});

/// Greedy selection of `target_size` features: start from the best single
/// feature; each step adds the feature that maximises the combined SNR among
/// those the correlation rule allows against every selected feature (falling
/// back to all remaining features if none is allowed). Ties go to the lower
/// index. Uses standardized statistics, so per-feature rescaling does not
/// change the result.
RefineResult refine_feature_indices(const ClassStats& stats, int target_size, const RefineRule& rule = {});

/// Feature samples at signal-known locations: lesion-present cases at their
/// lesion, lesion-absent case i at the lesion location of present case
/// (i mod n_present).
struct LocationSamples {
  Matrix present;
  Matrix absent;
};
LocationSamples collect_location_samples(std::span<const Case> cases, const FeatureEngine& engine,
                                         std::span<const int> indices);

/// Refined bank (selected filters kept in their original bank order).
FeatureBank refine_bank(const FeatureBank& bank, const ClassStats& stats, int target_size,
                        const RefineRule& rule = {});
FeatureBank refine_bank(const FeatureBank& bank, std::span<const Case> training, int target_size,
                        const RefineRule& rule = {});

}  // namespace vsmo
