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

#include "core/feature_stats.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>

namespace vsmo {

std::vector<int> mask_indices(FeatureMask mask) {
  std::vector<int> out;
  for (int k = 0; k < 32; ++k)
    if (mask & (FeatureMask{1} << k)) out.push_back(k);
  return out;
}

int mask_size(FeatureMask mask) noexcept { return std::popcount(mask); }

ClassStats ClassStats::restricted(FeatureMask mask) const {
  const auto idx = mask_indices(mask);
  for (int k : idx) require(k < dim(), ErrorCode::invalid_parameter, "feature mask exceeds statistics dimension");
  const auto n = static_cast<Eigen::Index>(idx.size());
  ClassStats out;
  out.mean_present.resize(n);
  out.mean_absent.resize(n);
  out.covariance.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.mean_present(i) = mean_present(idx[static_cast<std::size_t>(i)]);
    out.mean_absent(i) = mean_absent(idx[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < n; ++j)
      out.covariance(i, j) = covariance(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  out.n_present = n_present;
  out.n_absent = n_absent;
  return out;
}

ClassStats estimate_class_stats(const Matrix& present, const Matrix& absent, CovarianceModel model) {
  require(present.cols() == absent.cols() && present.cols() > 0, ErrorCode::invalid_parameter,
          "class samples must share a positive dimension");
  const auto dim = static_cast<int>(present.cols());
  const int needed = model == CovarianceModel::full ? dim + 1 : 2;
  const int have = static_cast<int>(std::min(present.rows(), absent.rows()));
  if (have < needed) {
    throw DegenerateStatsError("class statistics need " + std::to_string(needed) + " samples per class, smallest class has " +
                                   std::to_string(have),
                               needed - have);
  }
  require(present.allFinite() && absent.allFinite(), ErrorCode::invalid_input, "feature samples must be finite");

  ClassStats s;
  s.n_present = static_cast<int>(present.rows());
  s.n_absent = static_cast<int>(absent.rows());
  s.mean_present = present.colwise().mean().transpose();
  s.mean_absent = absent.colwise().mean().transpose();
  const Matrix cp = present.rowwise() - s.mean_present.transpose();
  const Matrix ca = absent.rowwise() - s.mean_absent.transpose();
  const double df = static_cast<double>(s.n_present + s.n_absent - 2);
  Matrix k = (cp.transpose() * cp + ca.transpose() * ca) / df;
  k = 0.5 * (k + k.transpose());
  if (model == CovarianceModel::diagonal) k = Matrix(k.diagonal().asDiagonal());
  s.covariance = std::move(k);
  return s;
}

ClassStats estimate_class_stats(std::span<const FeatureVector> present, std::span<const FeatureVector> absent) {
  require(!present.empty() && !absent.empty(), ErrorCode::invalid_input, "both classes need samples");
  const auto dim = static_cast<Eigen::Index>(present.front().values.size());
  auto to_matrix = [dim](std::span<const FeatureVector> rows) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      require(static_cast<Eigen::Index>(rows[r].values.size()) == dim, ErrorCode::invalid_parameter,
              "feature vectors must share a dimension");
      for (Eigen::Index c = 0; c < dim; ++c) m(static_cast<Eigen::Index>(r), c) = rows[r].values[static_cast<std::size_t>(c)];
    }
    return m;
  };
  return estimate_class_stats(to_matrix(present), to_matrix(absent));
}

double condition_number(const Matrix& symmetric) {
  if (symmetric.rows() == 0) return 1.0;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetric, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

Matrix regularized(const Matrix& covariance, double cap) {
  if (condition_number(covariance) <= cap) return covariance;
  const auto n = covariance.rows();
  double ridge = 1e-6 * covariance.trace() / static_cast<double>(n);
  if (!(ridge > 0.0)) ridge = 1e-12;
  Matrix out = covariance;
  out.diagonal().array() += ridge;
  return out;
}

SnrReport snr(const ClassStats& stats, FeatureMask subset, double condition_cap) {
  require(subset != 0, ErrorCode::invalid_parameter, "SNR needs a non-empty feature subset");
  const ClassStats sub = stats.restricted(subset);
  const Vector d = sub.delta();
  SnrReport r;
  r.subset = subset;
  const double cond = condition_number(sub.covariance);
  if (!(cond <= condition_cap)) fail(ErrorCode::conditioning, "covariance sub-block is singular or ill-conditioned");
  const Vector w = sub.covariance.ldlt().solve(d);
  r.snr = std::sqrt(std::max(0.0, d.dot(w)));
  r.auc_predicted = auc_from_snr(r.snr);
  return r;
}

double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double auc_from_snr(double snr) {
  require(snr >= 0.0 && !std::isnan(snr), ErrorCode::invalid_parameter, "SNR must be non-negative");
  return normal_cdf(snr / std::numbers::sqrt2);
}

double snr_from_auc(double auc) {
  require(auc >= 0.5 && auc < 1.0, ErrorCode::invalid_parameter, "AUC must lie in [0.5, 1)");
  if (auc == 0.5) return 0.0;
  // sqrt2 * Phi^-1(p) with Phi^-1(p) = -sqrt2 * erfc^-1(2p).
  return -2.0 * boost::math::erfc_inv(2.0 * auc);
}

FeaturePairSamples simulate_feature_pair(double snr_a, double snr_b, double rho, int n, Rng& rng) {
  require(std::abs(rho) < 1.0, ErrorCode::invalid_parameter, "|rho| must be below 1");
  require(n > 0, ErrorCode::invalid_parameter, "sample count must be positive");
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double tail = std::sqrt(1.0 - rho * rho);
  FeaturePairSamples out{Matrix(n, 2), Matrix(n, 2)};
  auto fill = [&](Matrix& m, double ma, double mb) {
    for (int i = 0; i < n; ++i) {
      const double z1 = gauss(rng);
      const double z2 = gauss(rng);
      m(i, 0) = ma + z1;
      m(i, 1) = mb + rho * z1 + tail * z2;
    }
  };
  fill(out.present, snr_a, snr_b);
  fill(out.absent, 0.0, 0.0);
  return out;
}

double pair_snr(double snr_a, double snr_b, double rho) {
  require(std::abs(rho) < 1.0, ErrorCode::invalid_parameter, "|rho| must be below 1");
  const double s2 = (snr_a * snr_a + snr_b * snr_b - 2.0 * rho * snr_a * snr_b) / (1.0 - rho * rho);
  return std::sqrt(std::max(0.0, s2));
}

bool rule_allows(double snr_a, double snr_b, double rho, const RefineRule& rule) {
  const double hi = std::max(snr_a, snr_b);
  const double ratio = hi > 0.0 ? std::min(snr_a, snr_b) / hi : 1.0;
  const bool similar = ratio >= rule.similar_ratio;
  if (rho >= 0.0 && rho < rule.low_correlation) return similar;
  if (rho > rule.high_correlation) return !similar;
  return true;
}

namespace {

double combined_snr2(const Matrix& corr, const Vector& z, std::span<const int> idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Matrix k(n, n);
  Vector d(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i) = z(idx[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < n; ++j) k(i, j) = corr(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  k = regularized(k);
  return std::max(0.0, d.dot(k.ldlt().solve(d)));
}

}  // namespace

RefineResult refine_feature_indices(const ClassStats& stats, int target_size, const RefineRule& rule) {
  const int n = stats.dim();
  require(target_size >= 1 && target_size <= n, ErrorCode::invalid_parameter, "target size must be in [1, bank size]");
  RefineResult res;
  const Vector sd = stats.covariance.diagonal().array().sqrt();
  require((sd.array() > 0.0).all() && sd.allFinite(), ErrorCode::conditioning, "a feature has zero variance");
  const Vector z = stats.delta().cwiseQuotient(sd);
  res.correlation = sd.cwiseInverse().asDiagonal() * stats.covariance * sd.cwiseInverse().asDiagonal();
  res.feature_snr.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) res.feature_snr[static_cast<std::size_t>(k)] = std::abs(z(k));

  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  int first = 0;
  for (int k = 1; k < n; ++k)
    if (res.feature_snr[static_cast<std::size_t>(k)] > res.feature_snr[static_cast<std::size_t>(first)]) first = k;
  res.indices.push_back(first);
  taken[static_cast<std::size_t>(first)] = true;
  res.steps.push_back({first, true, res.feature_snr[static_cast<std::size_t>(first)]});

  while (static_cast<int>(res.indices.size()) < target_size) {
    int best_allowed = -1, best_any = -1;
    double gain_allowed = -1.0, gain_any = -1.0;
    std::vector<int> trial = res.indices;
    trial.push_back(0);
    for (int j = 0; j < n; ++j) {
      if (taken[static_cast<std::size_t>(j)]) continue;
      trial.back() = j;
      const double g = combined_snr2(res.correlation, z, trial);
      bool allowed = true;
      for (int i : res.indices) {
        if (!rule_allows(res.feature_snr[static_cast<std::size_t>(i)], res.feature_snr[static_cast<std::size_t>(j)],
                         res.correlation(i, j), rule)) {
          allowed = false;
          break;
        }
      }
      if (g > gain_any) {
        gain_any = g;
        best_any = j;
      }
      if (allowed && g > gain_allowed) {
        gain_allowed = g;
        best_allowed = j;
      }
    }
    const bool compliant = best_allowed >= 0;
    const int pick = compliant ? best_allowed : best_any;
    taken[static_cast<std::size_t>(pick)] = true;
    res.indices.push_back(pick);
    res.steps.push_back({pick, compliant, std::sqrt(compliant ? gain_allowed : gain_any)});
  }
  return res;
}

LocationSamples collect_location_samples(std::span<const Case> cases, const FeatureEngine& engine,
                                         std::span<const int> indices) {
  std::vector<Pixel> lesion_sites;
  for (const auto& c : cases)
    if (c.lesion_present) {
      require(c.lesion_location.has_value(), ErrorCode::invalid_input, "lesion-present case without a location");
      lesion_sites.push_back(*c.lesion_location);
    }
  require(!lesion_sites.empty(), ErrorCode::invalid_input, "training set has no lesion-present cases");
  const auto dim = static_cast<Eigen::Index>(indices.size());
  std::vector<std::vector<double>> pres, abs;
  std::size_t absent_seen = 0;
  for (const auto& c : cases) {
    if (c.lesion_present) {
      pres.push_back(engine.extract(c.image, *c.lesion_location, indices));
    } else {
      abs.push_back(engine.extract(c.image, lesion_sites[absent_seen % lesion_sites.size()], indices));
      ++absent_seen;
    }
  }
  auto to_matrix = [dim](const std::vector<std::vector<double>>& rows) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (Eigen::Index k = 0; k < dim; ++k) m(static_cast<Eigen::Index>(r), k) = rows[r][static_cast<std::size_t>(k)];
    return m;
  };
  return {to_matrix(pres), to_matrix(abs)};
}

FeatureBank refine_bank(const FeatureBank& bank, const ClassStats& stats, int target_size, const RefineRule& rule) {
  require(stats.dim() == static_cast<int>(bank.size()), ErrorCode::invalid_parameter,
          "statistics dimension does not match bank");
  if (target_size == static_cast<int>(bank.size())) return bank;
  auto picked = refine_feature_indices(stats, target_size, rule).indices;
  std::sort(picked.begin(), picked.end());
  return bank.subset(picked);
}

FeatureBank refine_bank(const FeatureBank& bank, std::span<const Case> training, int target_size,
                        const RefineRule& rule) {
  require(target_size >= 1 && target_size <= static_cast<int>(bank.size()), ErrorCode::invalid_parameter,
          "target size must be in [1, bank size]");
  if (target_size == static_cast<int>(bank.size())) return bank;
  require(!training.empty(), ErrorCode::invalid_input, "bank refinement needs training cases");
  const FeatureEngine engine(bank, training.front().image.width(), training.front().image.height());
  std::vector<int> all(bank.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = static_cast<int>(k);
  const auto samples = collect_location_samples(training, engine, all);
  ClassStats stats = estimate_class_stats(samples.present, samples.absent);
  return refine_bank(bank, stats, target_size, rule);
}

}  // namespace vsmo
