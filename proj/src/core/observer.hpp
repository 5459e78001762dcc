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

// Two-stage visual-search observer.
//
// Search stage: a focal map w'd(x, y) over the search features selects up
// to max_candidates peaks at least min_separation apart.
//
// Decision stage: each candidate's decision-feature vector is thresholded
// per feature. The surviving features form a mask; the candidate is scored
// with the linear discriminant trained for exactly that mask. A candidate
// with no surviving feature gets the sentinel rating. The case rating is the
// best candidate score and the reported location is that candidate.

#pragma once

#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/feature_stats.hpp"
#include "core/gabor_bank.hpp"
#include "core/image.hpp"
#include "core/lroc.hpp"
#include "core/phantom_sim.hpp"

namespace vsmo {

enum class ThresholdStrategy { disabled, fixed, trained };

const char* to_string(ThresholdStrategy s) noexcept;
ThresholdStrategy threshold_strategy_from_string(const std::string& s);

inline constexpr double kNoThreshold = -std::numeric_limits<double>::infinity();

struct ObserverConfig {
  std::vector<int> search_features;    // indices into the observer's bank
  std::vector<int> decision_features;  // indices into the observer's bank
  bool prewhitening = true;
  ThresholdStrategy threshold_strategy = ThresholdStrategy::disabled;
  std::vector<double> fixed_thresholds;  // one per decision feature, strategy == fixed
  int max_candidates = 20;
  double min_separation = 9.4;
  double candidate_floor = -std::numeric_limits<double>::infinity();
  /// Candidates are only taken at least this many pixels from the edge.
  int search_margin = 0;
  /// Radius used for the training LROC AUC (threshold and feature search).
  double localization_radius = 9.4;
  double sentinel_rating = kSentinelRating;

  void validate(std::size_t bank_size) const;
};

struct Candidate {
  Pixel location;
  double focal_score = 0.0;
};

struct CaseResult {
  double rating = kSentinelRating;
  std::optional<Pixel> location;
  int candidates_evaluated = 0;
};

/// Linear discriminant for one surviving-feature mask.
struct SubsetDiscriminant {
  enum class Fit { full, diagonal, inherited };

  FeatureMask mask = 0;
  Fit fit = Fit::full;
  ClassStats stats;  // restricted to the mask's features
  Vector weights;    // K^-1 delta (prewhitening) or delta
  Vector midpoint;   // (mean_present + mean_absent) / 2
  int group_present = 0;  // training vectors whose mask matched exactly
  int group_absent = 0;

  /// w'(d - midpoint) for the mask's features of a full decision vector.
  [[nodiscard]] double score(std::span<const double> decision_values) const;
};

const char* to_string(SubsetDiscriminant::Fit fit) noexcept;

/// Discriminants for every mask that can occur under a threshold vector,
/// plus the unthresholded statistics of all decision features that small
/// groups fall back on.
struct DiscriminantSet {
  ClassStats reference;
  bool prewhitening = true;
  std::map<FeatureMask, SubsetDiscriminant> subsets;

  /// Discriminant for `mask`; masks without an entry are derived from the
  /// reference statistics.
  [[nodiscard]] SubsetDiscriminant lookup(FeatureMask mask) const;
};

/// Immutable once trained; evaluate_case may run concurrently.
struct TrainedObserver {
  ObserverConfig config;
  FeatureBank bank;
  int image_width = 0;
  int image_height = 0;
  ClassStats search_stats;
  Vector search_weights;
  std::vector<double> thresholds;  // per decision feature; -inf = disabled
  DiscriminantSet discriminants;
  int harvested_present = 0;
  int harvested_absent = 0;
  int missed_present = 0;
  std::shared_ptr<const FeatureEngine> engine;

  [[nodiscard]] std::string serialize() const;
  static TrainedObserver parse(const std::string& text);
  void save(const std::string& path) const;
  static TrainedObserver load(const std::string& path);
};

/// Discriminant weights of a statistics block.
Vector discriminant_weights(const ClassStats& stats, bool prewhitening);

/// Per-pixel w'd(x, y) over the search-feature maps.
Image focal_map(const Image& image, const FeatureEngine& engine, std::span<const int> search_features,
                const ClassStats& stats, bool prewhitening);
Image focal_map(const Image& image, const FeatureEngine& engine, std::span<const int> search_features,
                const Vector& weights);

/// Greedy peak picking over strict local maxima above `floor`: highest
/// first (ties in row-major order), each pick suppressing everything closer
/// than min_separation, until max_candidates or exhaustion.
std::vector<Candidate> select_candidates(const Image& focal, int max_candidates, double min_separation, double floor,
                                         int margin = 0);

/// Search-stage output for one training image: candidates and the decision
/// feature vector at each of them.
struct CandidateVectors {
  bool lesion_present = false;
  std::optional<Pixel> truth;
  std::vector<Candidate> candidates;
  std::vector<std::vector<double>> values;  // one row per candidate
};

/// Vectors used for class statistics: for lesion-present images the
/// candidate nearest the truth within min_separation (misses dropped), for
/// lesion-absent images the top candidate.
struct HarvestedVectors {
  Matrix present;
  Matrix absent;
  int missed_present = 0;
};
HarvestedVectors harvest_vectors(std::span<const CandidateVectors> images, double min_separation);

/// Surviving-feature mask: bit k set when value k > threshold k.
FeatureMask surviving_mask(std::span<const double> values, std::span<const double> thresholds);

/// Fits the full mask only when all thresholds are -inf, otherwise all
/// 2^n - 1 masks. Each mask is trained on the vectors whose mask matches
/// exactly. Groups with fewer than dim + 2 vectors per class fall back to a
/// diagonal covariance; fewer than 2 inherit the reference statistics
/// restricted to the mask. Throws a training error when the reference
/// itself cannot be estimated.
DiscriminantSet fit_discriminants(const HarvestedVectors& harvest, std::span<const double> thresholds,
                                  bool prewhitening);

/// Score of one candidate vector, or the sentinel when nothing survives.
double score_vector(std::span<const double> values, std::span<const double> thresholds, const DiscriminantSet& set,
                    double sentinel);

/// Rating/location of one image from its candidate vectors.
CaseResult rate_candidates(const CandidateVectors& image, std::span<const double> thresholds, const DiscriminantSet& set,
                           double sentinel);

/// LROC AUC of the given discriminants re-applied to the training images.
double training_lroc_auc(std::span<const CandidateVectors> images, std::span<const double> thresholds,
                         const DiscriminantSet& set, double radius, double sentinel);

/// Per-feature lower thresholds. `trained`: one coordinate sweep in feature
/// order, each feature trying -inf and the {0, 10, ..., 90} percentiles of
/// the lesion-absent training values, keeping the value with the highest
/// training LROC AUC (ties go to the higher threshold).
std::vector<double> train_thresholds(std::span<const CandidateVectors> images, const ObserverConfig& config);

/// Search stage for one image: focal map, candidates and decision vectors.
CandidateVectors search_stage(const Image& image, const FeatureEngine& engine, const ObserverConfig& config,
                              const Vector& search_weights);

TrainedObserver train_observer(std::span<const Case> training, const FeatureBank& bank, const ObserverConfig& config,
                               int threads = 1);
TrainedObserver train_observer(std::span<const Case> training, std::shared_ptr<const FeatureEngine> engine,
                               const ObserverConfig& config, int threads = 1);

CaseResult evaluate_case(const TrainedObserver& observer, const Image& image);

/// Observer results as LROC cases (truth copied from the cases).
LrocDataset evaluate_cases(const TrainedObserver& observer, std::span<const Case> cases, int threads = 1);

/// Exhaustive choice of the search and decision feature sets.
struct StageSelection {
  std::vector<int> search;
  std::vector<int> decision;
  double search_hit_rate = 0.0;  // lesion-present images with a candidate near the truth
  double decision_auc = 0.0;     // training LROC AUC of the chosen decision set
};

/// Stage-specific: the search set maximises the hit rate (then the top-
/// candidate hit rate); the decision set then maximises training LROC AUC.
/// If no decision set can be trained on a search set's candidates, the
/// next search set in that ranking is tried.
/// Shared: one set used by both stages, maximising training LROC AUC.
/// Candidate sets are all `per_stage`-subsets of the engine's bank; ties go
/// to the lexicographically first subset. `base` supplies every other
/// observer setting.
StageSelection select_stage_features(std::span<const Case> training, const FeatureEngine& engine,
                                     const ObserverConfig& base, int per_stage, bool stage_specific, int threads = 1);

/// All k-subsets of {0..n-1} in lexicographic order.
std::vector<std::vector<int>> combinations(int n, int k);

}  // namespace vsmo
