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

#include "core/observer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/parallel.hpp"

namespace vsmo {

const char* to_string(ThresholdStrategy s) noexcept {
  switch (s) {
    case ThresholdStrategy::disabled: return "disabled";
    case ThresholdStrategy::fixed: return "fixed";
    case ThresholdStrategy::trained: return "trained";
  }
  return "disabled";
}

ThresholdStrategy threshold_strategy_from_string(const std::string& s) {
  if (s == "disabled") return ThresholdStrategy::disabled;
  if (s == "fixed") return ThresholdStrategy::fixed;
  if (s == "trained") return ThresholdStrategy::trained;
  fail(ErrorCode::invalid_parameter, "unknown threshold strategy: " + s);
}

const char* to_string(SubsetDiscriminant::Fit fit) noexcept {
  switch (fit) {
    case SubsetDiscriminant::Fit::full: return "full";
    case SubsetDiscriminant::Fit::diagonal: return "diagonal";
    case SubsetDiscriminant::Fit::inherited: return "inherited";
  }
  return "full";
}

void ObserverConfig::validate(std::size_t bank_size) const {
  auto check_subset = [bank_size](const std::vector<int>& f, const char* what) {
    require(!f.empty(), ErrorCode::invalid_parameter, std::string(what) + " features must not be empty");
    require(f.size() <= 16, ErrorCode::invalid_parameter, std::string(what) + " features: at most 16");
    std::set<int> seen;
    for (int k : f) {
      require(k >= 0 && static_cast<std::size_t>(k) < bank_size, ErrorCode::invalid_parameter,
              std::string(what) + " feature index outside the bank");
      require(seen.insert(k).second, ErrorCode::invalid_parameter, std::string(what) + " features repeat an index");
    }
  };
  check_subset(search_features, "search");
  check_subset(decision_features, "decision");
  require(max_candidates >= 1, ErrorCode::invalid_parameter, "max_candidates must be at least 1");
  require(min_separation >= 1.0, ErrorCode::invalid_parameter, "min_separation must be at least 1 pixel");
  require(search_margin >= 0, ErrorCode::invalid_parameter, "search_margin must be non-negative");
  require(localization_radius >= 0.0, ErrorCode::invalid_parameter, "localization radius must be non-negative");
  require(std::isfinite(sentinel_rating), ErrorCode::invalid_parameter, "sentinel rating must be finite");
  if (threshold_strategy == ThresholdStrategy::fixed)
    require(fixed_thresholds.size() == decision_features.size(), ErrorCode::invalid_parameter,
            "fixed thresholds need one value per decision feature");
}

// ---------------------------------------------------------------------------
// Discriminants

double SubsetDiscriminant::score(std::span<const double> decision_values) const {
  double s = 0.0;
  Eigen::Index j = 0;
  for (int k : mask_indices(mask)) {
    s += weights(j) * (decision_values[static_cast<std::size_t>(k)] - midpoint(j));
    ++j;
  }
  return s;
}

Vector discriminant_weights(const ClassStats& stats, bool prewhitening) {
  const Vector d = stats.delta();
  if (!prewhitening) return d;
  return regularized(stats.covariance).ldlt().solve(d);
}

namespace {

SubsetDiscriminant make_discriminant(FeatureMask mask, SubsetDiscriminant::Fit fit, ClassStats stats, bool prewhitening,
                                     int group_present, int group_absent) {
  SubsetDiscriminant d;
  d.mask = mask;
  d.fit = fit;
  d.weights = discriminant_weights(stats, prewhitening);
  d.midpoint = 0.5 * (stats.mean_present + stats.mean_absent);
  d.stats = std::move(stats);
  d.group_present = group_present;
  d.group_absent = group_absent;
  return d;
}

Matrix select_columns(const Matrix& rows, const std::vector<int>& cols) {
  Matrix out(rows.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = rows.col(cols[j]);
  return out;
}

Matrix select_rows(const Matrix& m, const std::vector<Eigen::Index>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

// Full covariance with >= dim + 2 samples per class, diagonal with >= 2.
std::optional<std::pair<ClassStats, SubsetDiscriminant::Fit>> fit_group(const Matrix& present, const Matrix& absent) {
  const auto dim = present.cols();
  const auto n = std::min(present.rows(), absent.rows());
  if (n >= dim + 2) return std::pair{estimate_class_stats(present, absent), SubsetDiscriminant::Fit::full};
  if (n >= 2)
    return std::pair{estimate_class_stats(present, absent, CovarianceModel::diagonal), SubsetDiscriminant::Fit::diagonal};
  return std::nullopt;
}

}  // namespace

SubsetDiscriminant DiscriminantSet::lookup(FeatureMask mask) const {
  if (auto it = subsets.find(mask); it != subsets.end()) return it->second;
  return make_discriminant(mask, SubsetDiscriminant::Fit::inherited, reference.restricted(mask), prewhitening, 0, 0);
}

FeatureMask surviving_mask(std::span<const double> values, std::span<const double> thresholds) {
  FeatureMask m = 0;
  for (std::size_t k = 0; k < values.size(); ++k)
    if (values[k] > thresholds[k]) m |= FeatureMask{1} << k;
  return m;
}

DiscriminantSet fit_discriminants(const HarvestedVectors& harvest, std::span<const double> thresholds, bool prewhitening) {
  const auto dim = static_cast<int>(thresholds.size());
  require(harvest.present.cols() == dim && harvest.absent.cols() == dim, ErrorCode::invalid_parameter,
          "threshold count does not match decision features");
  DiscriminantSet set;
  set.prewhitening = prewhitening;
  auto ref = fit_group(harvest.present, harvest.absent);
  if (!ref)
    fail(ErrorCode::training, "too few harvested training vectors (" + std::to_string(harvest.present.rows()) +
                                  " present, " + std::to_string(harvest.absent.rows()) + " absent)");
  set.reference = ref->first;

  const bool all_disabled =
      std::all_of(thresholds.begin(), thresholds.end(), [](double t) { return t == kNoThreshold; });

  std::map<FeatureMask, std::vector<Eigen::Index>> pres_groups, abs_groups;
  auto group = [&](const Matrix& rows, std::map<FeatureMask, std::vector<Eigen::Index>>& out) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      for (int k = 0; k < dim; ++k) v[static_cast<std::size_t>(k)] = rows(r, k);
      out[surviving_mask(v, thresholds)].push_back(r);
    }
  };
  group(harvest.present, pres_groups);
  group(harvest.absent, abs_groups);

  const FeatureMask full = full_mask(dim);
  auto fit_mask = [&](FeatureMask mask) {
    const auto cols = mask_indices(mask);
    const auto& pi = pres_groups[mask];
    const auto& ai = abs_groups[mask];
    const int np = static_cast<int>(pi.size()), na = static_cast<int>(ai.size());
    if (auto g = fit_group(select_columns(select_rows(harvest.present, pi), cols),
                           select_columns(select_rows(harvest.absent, ai), cols))) {
      set.subsets.emplace(mask, make_discriminant(mask, g->second, std::move(g->first), prewhitening, np, na));
    } else {
      set.subsets.emplace(mask, make_discriminant(mask, SubsetDiscriminant::Fit::inherited, set.reference.restricted(mask),
                                                  prewhitening, np, na));
    }
  };
  if (all_disabled) {
    fit_mask(full);
  } else {
    for (FeatureMask m = 1; m <= full; ++m) fit_mask(m);
  }
  return set;
}

double score_vector(std::span<const double> values, std::span<const double> thresholds, const DiscriminantSet& set,
                    double sentinel) {
  const FeatureMask mask = surviving_mask(values, thresholds);
  if (mask == 0) return sentinel;
  double s;
  if (auto it = set.subsets.find(mask); it != set.subsets.end())
    s = it->second.score(values);
  else
    s = set.lookup(mask).score(values);
  // Finite scores always rank above the sentinel.
  if (!(s > sentinel)) s = std::nextafter(sentinel, 0.0);
  return s;
}

CaseResult rate_candidates(const CandidateVectors& image, std::span<const double> thresholds, const DiscriminantSet& set,
                           double sentinel) {
  CaseResult r;
  r.rating = sentinel;
  r.candidates_evaluated = static_cast<int>(image.candidates.size());
  for (std::size_t i = 0; i < image.candidates.size(); ++i) {
    const double s = score_vector(image.values[i], thresholds, set, sentinel);
    if (s > r.rating) {
      r.rating = s;
      r.location = image.candidates[i].location;
    }
  }
  return r;
}

double training_lroc_auc(std::span<const CandidateVectors> images, std::span<const double> thresholds,
                         const DiscriminantSet& set, double radius, double sentinel) {
  LrocDataset ds;
  ds.reserve(images.size());
  for (const auto& im : images) {
    const CaseResult r = rate_candidates(im, thresholds, set, sentinel);
    ds.push_back({{}, im.lesion_present, im.truth, r.rating, r.location});
  }
  return lroc_auc(ds, radius);
}

HarvestedVectors harvest_vectors(std::span<const CandidateVectors> images, double min_separation) {
  std::vector<const std::vector<double>*> pres, abs;
  int missed = 0;
  std::size_t dim = 0;
  for (const auto& im : images) {
    if (!im.values.empty()) dim = im.values.front().size();
    if (im.lesion_present) {
      require(im.truth.has_value(), ErrorCode::invalid_input, "lesion-present training image without a location");
      int best = -1;
      double best_d = 0.0;
      for (std::size_t i = 0; i < im.candidates.size(); ++i) {
        const double d = distance(im.candidates[i].location, *im.truth);
        if (d <= min_separation && (best < 0 || d < best_d)) {
          best = static_cast<int>(i);
          best_d = d;
        }
      }
      if (best < 0)
        ++missed;
      else
        pres.push_back(&im.values[static_cast<std::size_t>(best)]);
    } else if (!im.candidates.empty()) {
      abs.push_back(&im.values.front());
    }
  }
  auto to_matrix = [dim](const std::vector<const std::vector<double>*>& rows) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t k = 0; k < dim; ++k) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = (*rows[r])[k];
    return m;
  };
  return {to_matrix(pres), to_matrix(abs), missed};
}

namespace {

double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
}

}  // namespace

std::vector<double> train_thresholds(std::span<const CandidateVectors> images, const ObserverConfig& config) {
  const std::size_t n = config.decision_features.size();
  switch (config.threshold_strategy) {
    case ThresholdStrategy::disabled: return std::vector<double>(n, kNoThreshold);
    case ThresholdStrategy::fixed:
      require(config.fixed_thresholds.size() == n, ErrorCode::invalid_parameter,
              "fixed thresholds need one value per decision feature");
      return config.fixed_thresholds;
    case ThresholdStrategy::trained: break;
  }
  const HarvestedVectors harvest = harvest_vectors(images, config.min_separation);
  std::vector<double> current(n, kNoThreshold);
  if (harvest.absent.rows() == 0) return current;

  auto evaluate = [&](const std::vector<double>& t) {
    const DiscriminantSet set = fit_discriminants(harvest, t, config.prewhitening);
    return training_lroc_auc(images, t, set, config.localization_radius, config.sentinel_rating);
  };
  double best = evaluate(current);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> column(static_cast<std::size_t>(harvest.absent.rows()));
    for (Eigen::Index r = 0; r < harvest.absent.rows(); ++r)
      column[static_cast<std::size_t>(r)] = harvest.absent(r, static_cast<Eigen::Index>(k));
    std::vector<double> grid;
    for (int p = 0; p <= 90; p += 10) grid.push_back(percentile(column, p));
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    double chosen = current[k];
    for (double t : grid) {
      std::vector<double> trial = current;
      trial[k] = t;
      const double auc = evaluate(trial);
      if (auc >= best) {
        best = auc;
        chosen = t;
      }
    }
    current[k] = chosen;
  }
  return current;
}

// ---------------------------------------------------------------------------
// Search stage

Image focal_map(const Image& image, const FeatureEngine& engine, std::span<const int> search_features,
                const Vector& weights) {
  require(static_cast<std::size_t>(weights.size()) == search_features.size(), ErrorCode::invalid_parameter,
          "one weight per search feature");
  return engine.weighted_map(image, search_features, std::span<const double>(weights.data(), search_features.size()));
}

Image focal_map(const Image& image, const FeatureEngine& engine, std::span<const int> search_features,
                const ClassStats& stats, bool prewhitening) {
  require(stats.dim() == static_cast<int>(search_features.size()), ErrorCode::invalid_parameter,
          "statistics must be trained on the search features");
  const double cond = condition_number(stats.covariance);
  if (prewhitening && !(cond <= kConditionCap))
    fail(ErrorCode::conditioning, "search covariance is singular or ill-conditioned");
  return focal_map(image, engine, search_features, discriminant_weights(stats, prewhitening));
}

std::vector<Candidate> select_candidates(const Image& focal, int max_candidates, double min_separation, double floor,
                                         int margin) {
  std::vector<Candidate> maxima;
  const int w = focal.width(), h = focal.height();
  for (int y = margin; y < h - margin; ++y) {
    for (int x = margin; x < w - margin; ++x) {
      const double v = focal.at(x, y);
      if (!(v > floor)) continue;
      bool peak = true;
      for (int dy = -1; dy <= 1 && peak; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          if ((dx == 0 && dy == 0) || xx < 0 || xx >= w) continue;
          if (!(v > focal.at(xx, yy))) {
            peak = false;
            break;
          }
        }
      }
      if (peak) maxima.push_back({{x, y}, v});
    }
  }
  // Row-major scan order makes the stable sort break ties by position.
  std::stable_sort(maxima.begin(), maxima.end(),
                   [](const Candidate& a, const Candidate& b) { return a.focal_score > b.focal_score; });
  std::vector<Candidate> kept;
  for (const auto& m : maxima) {
    if (static_cast<int>(kept.size()) >= max_candidates) break;
    bool clear = true;
    for (const auto& k : kept)
      if (distance(k.location, m.location) < min_separation) {
        clear = false;
        break;
      }
    if (clear) kept.push_back(m);
  }
  return kept;
}

CandidateVectors search_stage(const Image& image, const FeatureEngine& engine, const ObserverConfig& config,
                              const Vector& search_weights) {
  CandidateVectors cv;
  const Image focal = focal_map(image, engine, config.search_features, search_weights);
  cv.candidates = select_candidates(focal, config.max_candidates, config.min_separation, config.candidate_floor,
                                    config.search_margin);
  cv.values.reserve(cv.candidates.size());
  for (const auto& c : cv.candidates) cv.values.push_back(engine.extract(image, c.location, config.decision_features));
  return cv;
}

// ---------------------------------------------------------------------------
// Training

namespace {

ClassStats fit_search_stats(std::span<const Case> training, const FeatureEngine& engine, std::span<const int> features) {
  const auto samples = collect_location_samples(training, engine, features);
  auto g = fit_group(samples.present, samples.absent);
  if (!g) fail(ErrorCode::training, "too few training cases for search-stage statistics");
  return std::move(g->first);
}

void require_both_classes(std::span<const Case> training) {
  const bool any_present = std::any_of(training.begin(), training.end(), [](const Case& c) { return c.lesion_present; });
  const bool any_absent = std::any_of(training.begin(), training.end(), [](const Case& c) { return !c.lesion_present; });
  require(any_present && any_absent, ErrorCode::training, "training needs lesion-present and lesion-absent cases");
}

}  // namespace

TrainedObserver train_observer(std::span<const Case> training, const FeatureBank& bank, const ObserverConfig& config,
                               int threads) {
  require(!training.empty(), ErrorCode::training, "no training cases");
  auto engine = std::make_shared<const FeatureEngine>(bank, training.front().image.width(), training.front().image.height());
  return train_observer(training, std::move(engine), config, threads);
}

TrainedObserver train_observer(std::span<const Case> training, std::shared_ptr<const FeatureEngine> engine,
                               const ObserverConfig& config, int threads) {
  require(engine != nullptr, ErrorCode::invalid_parameter, "missing feature engine");
  config.validate(engine->bank().size());
  require(!training.empty(), ErrorCode::training, "no training cases");
  require_both_classes(training);

  TrainedObserver obs;
  obs.config = config;
  obs.bank = engine->bank();
  obs.image_width = engine->width();
  obs.image_height = engine->height();
  obs.search_stats = fit_search_stats(training, *engine, config.search_features);
  obs.search_weights = discriminant_weights(obs.search_stats, config.prewhitening);

  std::vector<CandidateVectors> images(training.size());
  parallel_for(training.size(), threads, [&](std::size_t i) {
    images[i] = search_stage(training[i].image, *engine, config, obs.search_weights);
    images[i].lesion_present = training[i].lesion_present;
    images[i].truth = training[i].lesion_location;
  });

  const HarvestedVectors harvest = harvest_vectors(images, config.min_separation);
  if (harvest.present.rows() == 0)
    fail(ErrorCode::training, "no lesion-present training image has a candidate near its lesion");
  obs.thresholds = train_thresholds(images, config);
  obs.discriminants = fit_discriminants(harvest, obs.thresholds, config.prewhitening);

  bool any_surviving = false;
  std::vector<double> v(config.decision_features.size());
  for (Eigen::Index r = 0; r < harvest.present.rows() && !any_surviving; ++r) {
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = harvest.present(r, static_cast<Eigen::Index>(k));
    any_surviving = surviving_mask(v, obs.thresholds) != 0;
  }
  if (!any_surviving) fail(ErrorCode::training, "no lesion-present training vector survives the thresholds");

  obs.harvested_present = static_cast<int>(harvest.present.rows());
  obs.harvested_absent = static_cast<int>(harvest.absent.rows());
  obs.missed_present = harvest.missed_present;
  obs.engine = std::move(engine);
  return obs;
}

CaseResult evaluate_case(const TrainedObserver& observer, const Image& image) {
  require(observer.engine != nullptr, ErrorCode::precondition, "observer is not trained");
  const CandidateVectors cv = search_stage(image, *observer.engine, observer.config, observer.search_weights);
  return rate_candidates(cv, observer.thresholds, observer.discriminants, observer.config.sentinel_rating);
}

LrocDataset evaluate_cases(const TrainedObserver& observer, std::span<const Case> cases, int threads) {
  LrocDataset out(cases.size());
  parallel_for(cases.size(), threads, [&](std::size_t i) {
    const CaseResult r = evaluate_case(observer, cases[i].image);
    out[i] = {cases[i].id, cases[i].lesion_present, cases[i].lesion_location, r.rating, r.location};
  });
  return out;
}

// ---------------------------------------------------------------------------
// Stage feature selection

std::vector<std::vector<int>> combinations(int n, int k) {
  require(k >= 1 && k <= n, ErrorCode::invalid_parameter, "combination size must be in [1, n]");
  std::vector<std::vector<int>> out;
  std::vector<int> c(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) c[static_cast<std::size_t>(i)] = i;
  for (;;) {
    out.push_back(c);
    int i = k - 1;
    while (i >= 0 && c[static_cast<std::size_t>(i)] == n - k + i) --i;
    if (i < 0) break;
    ++c[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

namespace {

FeatureMask mask_of(const std::vector<int>& indices) {
  FeatureMask m = 0;
  for (int k : indices) m |= FeatureMask{1} << k;
  return m;
}

// Training LROC AUC of a decision set, or -1 if the set cannot be trained.
double decision_auc(std::span<const CandidateVectors> images, const ObserverConfig& config) {
  try {
    const HarvestedVectors harvest = harvest_vectors(images, config.min_separation);
    if (harvest.present.rows() == 0) return -1.0;
    const auto thresholds = train_thresholds(images, config);
    const DiscriminantSet set = fit_discriminants(harvest, thresholds, config.prewhitening);
    return training_lroc_auc(images, thresholds, set, config.localization_radius, config.sentinel_rating);
  } catch (const Error&) {
    return -1.0;
  }
}

Image combine_maps(const std::vector<Image>& maps, const std::vector<int>& subset, const Vector& weights) {
  Image out(maps.front().width(), maps.front().height());
  auto dst = out.data();
  for (std::size_t j = 0; j < subset.size(); ++j) {
    const auto src = maps[static_cast<std::size_t>(subset[j])].data();
    const double w = weights(static_cast<Eigen::Index>(j));
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += w * src[i];
  }
  return out;
}

}  // namespace

StageSelection select_stage_features(std::span<const Case> training, const FeatureEngine& engine,
                                     const ObserverConfig& base, int per_stage, bool stage_specific, int threads) {
  const int n = static_cast<int>(engine.bank().size());
  require(n <= 32, ErrorCode::invalid_parameter, "feature selection supports at most 32 bank features");
  require(per_stage >= 1 && per_stage <= n, ErrorCode::invalid_parameter, "features per stage must be in [1, bank size]");
  require_both_classes(training);
  const auto subsets = combinations(n, per_stage);
  std::vector<int> all(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) all[static_cast<std::size_t>(k)] = k;

  const ClassStats stats = fit_search_stats(training, engine, all);
  std::vector<Vector> weights;
  weights.reserve(subsets.size());
  for (const auto& s : subsets) weights.push_back(discriminant_weights(stats.restricted(mask_of(s)), base.prewhitening));

  ObserverConfig cfg = base;
  StageSelection out;

  if (stage_specific) {
    // hits[i * S + s]: bit 0 = some candidate near the truth, bit 1 = the top one is.
    std::vector<std::uint8_t> hits(training.size() * subsets.size(), 0);
    parallel_for(training.size(), threads, [&](std::size_t i) {
      const Case& c = training[i];
      if (!c.lesion_present) return;
      const auto maps = engine.maps(c.image, all);
      for (std::size_t s = 0; s < subsets.size(); ++s) {
        const auto cands = select_candidates(combine_maps(maps, subsets[s], weights[s]), base.max_candidates,
                                             base.min_separation, base.candidate_floor, base.search_margin);
        std::uint8_t h = 0;
        for (std::size_t j = 0; j < cands.size(); ++j)
          if (distance(cands[j].location, *c.lesion_location) <= base.min_separation) {
            h |= 1;
            if (j == 0) h |= 2;
            break;
          }
        hits[i * subsets.size() + s] = h;
      }
    });
    int n_present = 0;
    for (const auto& c : training) n_present += c.lesion_present ? 1 : 0;
    std::vector<std::pair<int, int>> keys(subsets.size(), {0, 0});
    for (std::size_t s = 0; s < subsets.size(); ++s)
      for (std::size_t i = 0; i < training.size(); ++i) {
        keys[s].first += hits[i * subsets.size() + s] & 1;
        keys[s].second += (hits[i * subsets.size() + s] >> 1) & 1;
      }
    std::vector<std::size_t> order(subsets.size());
    for (std::size_t s = 0; s < order.size(); ++s) order[s] = s;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] > keys[b]; });

    // A search set whose candidates cannot train any decision set (say, no
    // candidates on most lesion-absent images) gives way to the next one.
    out.decision_auc = -1.0;
    for (std::size_t best : order) {
      cfg.search_features = subsets[best];
      cfg.decision_features = all;
      std::vector<CandidateVectors> images(training.size());
      parallel_for(training.size(), threads, [&](std::size_t i) {
        images[i] = search_stage(training[i].image, engine, cfg, weights[best]);
        images[i].lesion_present = training[i].lesion_present;
        images[i].truth = training[i].lesion_location;
      });

      std::vector<double> aucs(subsets.size(), -1.0);
      parallel_for(subsets.size(), threads, [&](std::size_t s) {
        std::vector<CandidateVectors> sub(images.size());
        for (std::size_t i = 0; i < images.size(); ++i) {
          sub[i].lesion_present = images[i].lesion_present;
          sub[i].truth = images[i].truth;
          sub[i].candidates = images[i].candidates;
          sub[i].values.reserve(images[i].values.size());
          for (const auto& row : images[i].values) {
            std::vector<double> r;
            r.reserve(subsets[s].size());
            for (int k : subsets[s]) r.push_back(row[static_cast<std::size_t>(k)]);
            sub[i].values.push_back(std::move(r));
          }
        }
        ObserverConfig c = cfg;
        c.decision_features = subsets[s];
        aucs[s] = decision_auc(sub, c);
      });
      const auto it = std::max_element(aucs.begin(), aucs.end());
      if (*it < 0.0) continue;
      out.search = subsets[best];
      out.search_hit_rate = static_cast<double>(keys[best].first) / std::max(1, n_present);
      out.decision = subsets[static_cast<std::size_t>(it - aucs.begin())];
      out.decision_auc = *it;
      break;
    }
  } else {
    // Shared features: per image and subset, candidates and the subset's
    // own feature values read from the maps.
    std::vector<std::vector<CandidateVectors>> per_image(training.size());
    parallel_for(training.size(), threads, [&](std::size_t i) {
      const Case& c = training[i];
      const auto maps = engine.maps(c.image, all);
      auto& slot = per_image[i];
      slot.resize(subsets.size());
      for (std::size_t s = 0; s < subsets.size(); ++s) {
        auto& cv = slot[s];
        cv.lesion_present = c.lesion_present;
        cv.truth = c.lesion_location;
        cv.candidates = select_candidates(combine_maps(maps, subsets[s], weights[s]), base.max_candidates,
                                          base.min_separation, base.candidate_floor, base.search_margin);
        for (const auto& cand : cv.candidates) {
          std::vector<double> r;
          for (int k : subsets[s]) r.push_back(maps[static_cast<std::size_t>(k)].at(cand.location));
          cv.values.push_back(std::move(r));
        }
      }
    });
    std::vector<double> aucs(subsets.size(), -1.0);
    parallel_for(subsets.size(), threads, [&](std::size_t s) {
      std::vector<CandidateVectors> sub(training.size());
      for (std::size_t i = 0; i < training.size(); ++i) sub[i] = per_image[i][s];
      ObserverConfig c = cfg;
      c.search_features = subsets[s];
      c.decision_features = subsets[s];
      aucs[s] = decision_auc(sub, c);
    });
    const auto it = std::max_element(aucs.begin(), aucs.end());
    const auto s = static_cast<std::size_t>(it - aucs.begin());
    out.search = subsets[s];
    out.decision = subsets[s];
    out.decision_auc = *it;
    int n_present = 0, n_hit = 0;
    for (std::size_t i = 0; i < training.size(); ++i) {
      if (!training[i].lesion_present) continue;
      ++n_present;
      for (const auto& cand : per_image[i][s].candidates)
        if (distance(cand.location, *training[i].lesion_location) <= base.min_separation) {
          ++n_hit;
          break;
        }
    }
    out.search_hit_rate = static_cast<double>(n_hit) / std::max(1, n_present);
  }
  require(out.decision_auc >= 0.0, ErrorCode::training, "no feature subset could be trained");
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

using nlohmann::json;

constexpr int kObserverFormatVersion = 1;

// JSON has no infinities: -inf is written as null.
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double number_or_neg_inf(const json& j) { return j.is_null() ? -std::numeric_limits<double>::infinity() : j.get<double>(); }

json to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from(const json& j) {
  const auto n = static_cast<Eigen::Index>(j.size());
  Matrix m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto row = j.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
    require(static_cast<Eigen::Index>(row.size()) == n, ErrorCode::parse, "covariance must be square");
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

json to_json(const ClassStats& s) {
  return {{"mean_present", to_json(s.mean_present)},
          {"mean_absent", to_json(s.mean_absent)},
          {"covariance", to_json(s.covariance)},
          {"n_present", s.n_present},
          {"n_absent", s.n_absent}};
}

ClassStats stats_from(const json& j) {
  ClassStats s;
  s.mean_present = vector_from(j.at("mean_present"));
  s.mean_absent = vector_from(j.at("mean_absent"));
  s.covariance = matrix_from(j.at("covariance"));
  s.n_present = j.at("n_present").get<int>();
  s.n_absent = j.at("n_absent").get<int>();
  require(s.mean_absent.size() == s.mean_present.size() && s.covariance.rows() == s.mean_present.size(),
          ErrorCode::parse, "class statistics dimensions disagree");
  return s;
}

SubsetDiscriminant::Fit fit_from(const std::string& s) {
  if (s == "full") return SubsetDiscriminant::Fit::full;
  if (s == "diagonal") return SubsetDiscriminant::Fit::diagonal;
  if (s == "inherited") return SubsetDiscriminant::Fit::inherited;
  fail(ErrorCode::parse, "unknown discriminant fit: " + s);
}

json config_to_json(const ObserverConfig& c) {
  json fixed = json::array();
  for (double t : c.fixed_thresholds) fixed.push_back(number_or_null(t));
  return {{"search_features", c.search_features},
          {"decision_features", c.decision_features},
          {"prewhitening", c.prewhitening},
          {"threshold_strategy", to_string(c.threshold_strategy)},
          {"fixed_thresholds", fixed},
          {"max_candidates", c.max_candidates},
          {"min_separation", c.min_separation},
          {"candidate_floor", number_or_null(c.candidate_floor)},
          {"search_margin", c.search_margin},
          {"localization_radius", c.localization_radius},
          {"sentinel_rating", c.sentinel_rating}};
}

ObserverConfig config_from(const json& j) {
  ObserverConfig c;
  c.search_features = j.at("search_features").get<std::vector<int>>();
  c.decision_features = j.at("decision_features").get<std::vector<int>>();
  c.prewhitening = j.at("prewhitening").get<bool>();
  c.threshold_strategy = threshold_strategy_from_string(j.at("threshold_strategy").get<std::string>());
  for (const auto& t : j.at("fixed_thresholds")) c.fixed_thresholds.push_back(number_or_neg_inf(t));
  c.max_candidates = j.at("max_candidates").get<int>();
  c.min_separation = j.at("min_separation").get<double>();
  c.candidate_floor = number_or_neg_inf(j.at("candidate_floor"));
  c.search_margin = j.at("search_margin").get<int>();
  c.localization_radius = j.at("localization_radius").get<double>();
  c.sentinel_rating = j.at("sentinel_rating").get<double>();
  return c;
}

}  // namespace

std::string TrainedObserver::serialize() const {
  json thr = json::array();
  for (double t : thresholds) thr.push_back(number_or_null(t));
  json subs = json::array();
  for (const auto& [mask, d] : discriminants.subsets)
    subs.push_back({{"mask", mask},
                    {"fit", to_string(d.fit)},
                    {"stats", to_json(d.stats)},
                    {"weights", to_json(d.weights)},
                    {"midpoint", to_json(d.midpoint)},
                    {"group_present", d.group_present},
                    {"group_absent", d.group_absent}});
  const json j = {{"format", "vsmo-observer"},
                  {"version", kObserverFormatVersion},
                  {"bank_hash", bank.hash()},
                  {"bank", bank.serialize()},
                  {"image_width", image_width},
                  {"image_height", image_height},
                  {"config", config_to_json(config)},
                  {"search_stats", to_json(search_stats)},
                  {"search_weights", to_json(search_weights)},
                  {"thresholds", thr},
                  {"prewhitening", discriminants.prewhitening},
                  {"reference", to_json(discriminants.reference)},
                  {"subsets", subs},
                  {"harvested_present", harvested_present},
                  {"harvested_absent", harvested_absent},
                  {"missed_present", missed_present}};
  return j.dump(1) + "\n";
}

TrainedObserver TrainedObserver::parse(const std::string& text) {
  TrainedObserver obs;
  try {
    const json j = json::parse(text);
    require(j.at("format") == "vsmo-observer", ErrorCode::parse, "not an observer file");
    require(j.at("version") == kObserverFormatVersion, ErrorCode::parse, "unsupported observer format version");
    obs.bank = FeatureBank::parse(j.at("bank").get<std::string>());
    require(obs.bank.hash() == j.at("bank_hash").get<std::string>(), ErrorCode::parse,
            "observer bank does not match its recorded hash");
    obs.image_width = j.at("image_width").get<int>();
    obs.image_height = j.at("image_height").get<int>();
    obs.config = config_from(j.at("config"));
    obs.config.validate(obs.bank.size());
    obs.search_stats = stats_from(j.at("search_stats"));
    obs.search_weights = vector_from(j.at("search_weights"));
    for (const auto& t : j.at("thresholds")) obs.thresholds.push_back(number_or_neg_inf(t));
    require(obs.thresholds.size() == obs.config.decision_features.size(), ErrorCode::parse,
            "one threshold per decision feature");
    obs.discriminants.prewhitening = j.at("prewhitening").get<bool>();
    obs.discriminants.reference = stats_from(j.at("reference"));
    for (const auto& s : j.at("subsets")) {
      SubsetDiscriminant d;
      d.mask = s.at("mask").get<FeatureMask>();
      d.fit = fit_from(s.at("fit").get<std::string>());
      d.stats = stats_from(s.at("stats"));
      d.weights = vector_from(s.at("weights"));
      d.midpoint = vector_from(s.at("midpoint"));
      d.group_present = s.at("group_present").get<int>();
      d.group_absent = s.at("group_absent").get<int>();
      require(d.mask != 0 && d.mask <= full_mask(static_cast<int>(obs.thresholds.size())) &&
                  d.weights.size() == mask_size(d.mask) && d.midpoint.size() == mask_size(d.mask),
              ErrorCode::parse, "subset discriminant does not fit its mask");
      obs.discriminants.subsets.emplace(d.mask, std::move(d));
    }
    obs.harvested_present = j.at("harvested_present").get<int>();
    obs.harvested_absent = j.at("harvested_absent").get<int>();
    obs.missed_present = j.at("missed_present").get<int>();
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("malformed observer file: ") + e.what());
  }
  obs.engine = std::make_shared<const FeatureEngine>(obs.bank, obs.image_width, obs.image_height);
  return obs;
}

void TrainedObserver::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write observer file " + path);
  out << serialize();
  require(static_cast<bool>(out), ErrorCode::io, "failed writing observer file " + path);
}

TrainedObserver TrainedObserver::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open observer file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace vsmo
