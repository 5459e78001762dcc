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

#include "vsmo/vsmo.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>

#include <nlohmann/json.hpp>

#include "core/config.hpp"
#include "core/harness.hpp"
#include "core/io.hpp"
#include "core/study_server.hpp"

struct vsmo_config {
  vsmo::ExperimentConfig config;
};

struct vsmo_dataset {
  std::vector<vsmo::Case> cases;
  std::string spec_hash;
};

struct vsmo_observer {
  vsmo::TrainedObserver observer;
};

struct vsmo_results {
  vsmo::LrocDataset rows;
};

struct vsmo_server {
  std::unique_ptr<vsmo::StudyStore> store;
  std::unique_ptr<vsmo::StudyServer> server;
};

namespace {

thread_local std::string last_error;

struct NullArgument {
  std::string message;
};

template <class F>
vsmo_status guarded(F&& f) {
  last_error.clear();
  try {
    f();
    return VSMO_OK;
  } catch (const vsmo::Error& e) {
    last_error = e.what();
    return static_cast<vsmo_status>(e.code());
  } catch (const NullArgument& e) {
    last_error = e.message;
    return VSMO_ERR_NULL_ARGUMENT;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown error";
  }
  return VSMO_ERR_INTERNAL;
}

void need(const void* p, const char* what) {
  if (!p) throw NullArgument{std::string(what) + " must not be NULL"};
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

vsmo::ProgressFn progress_fn(vsmo_progress_fn fn, void* user) {
  if (!fn) return {};
  return [fn, user](const std::string& m) { fn(m.c_str(), user); };
}

template <class T, class F>
vsmo_status make(T** out, F&& build) {
  if (!out) {
    last_error = "output handle must not be NULL";
    return VSMO_ERR_NULL_ARGUMENT;
  }
  *out = nullptr;
  return guarded([&] { *out = build().release(); });
}

}  // namespace

extern "C" {

const char* vsmo_version(void) { return "1.0.0"; }

const char* vsmo_last_error(void) { return last_error.c_str(); }

const char* vsmo_status_name(vsmo_status status) {
  switch (status) {
    case VSMO_OK: return "ok";
    case VSMO_ERR_NULL_ARGUMENT: return "null-argument";
    case VSMO_ERR_INTERNAL: return "internal";
    default: break;
  }
  if (status >= VSMO_ERR_INVALID_PARAMETER && status <= VSMO_ERR_SESSION_COMPLETE)
    return vsmo::error_code_name(static_cast<vsmo::ErrorCode>(status));
  return "unknown";
}

void vsmo_string_free(char* s) { std::free(s); }

// ---------------------------------------------------------------------------

vsmo_status vsmo_config_default(vsmo_config** out) {
  return make(out, [] { return std::make_unique<vsmo_config>(); });
}

vsmo_status vsmo_config_load(const char* path, vsmo_config** out) {
  return make(out, [&] {
    need(path, "path");
    return std::unique_ptr<vsmo_config>(new vsmo_config{vsmo::load_experiment_config(path)});
  });
}

vsmo_status vsmo_config_parse(const char* text, vsmo_config** out) {
  return make(out, [&] {
    need(text, "text");
    return std::unique_ptr<vsmo_config>(new vsmo_config{vsmo::parse_experiment_config(text)});
  });
}

vsmo_status vsmo_config_set_seed(vsmo_config* config, uint64_t seed) {
  return guarded([&] {
    need(config, "config");
    config->config.seed = seed;
  });
}

vsmo_status vsmo_config_set_threads(vsmo_config* config, int threads) {
  return guarded([&] {
    need(config, "config");
    vsmo::require(threads >= 1, vsmo::ErrorCode::invalid_parameter, "threads must be at least 1");
    config->config.threads = threads;
  });
}

vsmo_status vsmo_config_set_output_dir(vsmo_config* config, const char* dir) {
  return guarded([&] {
    need(config, "config");
    need(dir, "dir");
    config->config.output_dir = dir;
  });
}

vsmo_status vsmo_config_set_diameter(vsmo_config* config, double relative_diameter) {
  return guarded([&] {
    need(config, "config");
    vsmo::PinholeSpec p = config->config.pinhole;
    p.relative_diameter = relative_diameter;
    p.validate();
    config->config.pinhole = p;
  });
}

vsmo_status vsmo_config_get_output_dir(const vsmo_config* config, char** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = copy_string(config->config.output_dir);
  });
}

vsmo_status vsmo_config_hash(const vsmo_config* config, char** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = copy_string(config->config.hash());
  });
}

void vsmo_config_free(vsmo_config* config) { delete config; }

// ---------------------------------------------------------------------------

vsmo_status vsmo_simulate(const vsmo_config* config, int n_pairs, uint64_t seed, vsmo_dataset** out) {
  return make(out, [&] {
    need(config, "config");
    vsmo::require(n_pairs >= 1, vsmo::ErrorCode::invalid_parameter, "n_pairs must be at least 1");
    const auto& c = config->config;
    auto d = std::make_unique<vsmo_dataset>();
    d->cases = vsmo::generate_dataset(c.phantom, c.pinhole, n_pairs, n_pairs, seed, c.threads);
    d->spec_hash = vsmo::spec_hash(c.phantom, c.pinhole);
    return d;
  });
}

vsmo_status vsmo_dataset_load(const char* dir, vsmo_dataset** out) {
  return make(out, [&] {
    need(dir, "dir");
    auto d = std::make_unique<vsmo_dataset>();
    d->cases = vsmo::load_dataset(dir);
    if (!d->cases.empty()) {
      const auto sidecar = std::filesystem::path(dir) / (d->cases.front().id + ".json");
      d->spec_hash = nlohmann::json::parse(vsmo::read_text_file(sidecar)).value("spec_hash", "");
    }
    return d;
  });
}

vsmo_status vsmo_dataset_save(const vsmo_dataset* dataset, const char* dir) {
  return guarded([&] {
    need(dataset, "dataset");
    need(dir, "dir");
    vsmo::save_dataset(dir, dataset->cases, dataset->spec_hash);
  });
}

size_t vsmo_dataset_size(const vsmo_dataset* dataset) { return dataset ? dataset->cases.size() : 0; }

void vsmo_dataset_free(vsmo_dataset* dataset) { delete dataset; }

// ---------------------------------------------------------------------------

vsmo_status vsmo_train(const vsmo_config* config, const char* variant, const vsmo_dataset* design,
                       const vsmo_dataset* training, vsmo_observer** out) {
  return make(out, [&] {
    need(config, "config");
    need(variant, "variant");
    need(training, "training");
    const auto& c = config->config;
    const auto& design_cases = design ? design->cases : training->cases;
    vsmo::require(!design_cases.empty() && !training->cases.empty(), vsmo::ErrorCode::invalid_input,
                  "training and design sets must not be empty");
    const auto& first = design_cases.front().image;
    auto engine = std::make_shared<const vsmo::FeatureEngine>(vsmo::refine_for(design_cases, c), first.width(),
                                                              first.height());
    const auto designed = vsmo::design_observer(design_cases, engine, c, vsmo::parse_variant(variant));
    return std::unique_ptr<vsmo_observer>(
        new vsmo_observer{vsmo::train_observer(training->cases, engine, designed.config, c.threads)});
  });
}

vsmo_status vsmo_observer_save(const vsmo_observer* observer, const char* path) {
  return guarded([&] {
    need(observer, "observer");
    need(path, "path");
    vsmo::write_text_file(path, observer->observer.serialize());
  });
}

vsmo_status vsmo_observer_load(const char* path, vsmo_observer** out) {
  return make(out, [&] {
    need(path, "path");
    return std::unique_ptr<vsmo_observer>(new vsmo_observer{vsmo::TrainedObserver::parse(vsmo::read_text_file(path))});
  });
}

void vsmo_observer_free(vsmo_observer* observer) { delete observer; }

// ---------------------------------------------------------------------------

vsmo_status vsmo_evaluate(const vsmo_observer* observer, const vsmo_dataset* dataset, int threads,
                          vsmo_results** out) {
  return make(out, [&] {
    need(observer, "observer");
    need(dataset, "dataset");
    vsmo::require(threads >= 1, vsmo::ErrorCode::invalid_parameter, "threads must be at least 1");
    return std::unique_ptr<vsmo_results>(
        new vsmo_results{vsmo::evaluate_cases(observer->observer, dataset->cases, threads)});
  });
}

vsmo_status vsmo_results_load(const char* path, vsmo_results** out) {
  return make(out, [&] {
    need(path, "path");
    return std::unique_ptr<vsmo_results>(new vsmo_results{vsmo::read_results_csv(path)});
  });
}

vsmo_status vsmo_results_save(const vsmo_results* results, const char* path) {
  return guarded([&] {
    need(results, "results");
    need(path, "path");
    vsmo::write_text_file(path, vsmo::write_results_csv(results->rows));
  });
}

size_t vsmo_results_size(const vsmo_results* results) { return results ? results->rows.size() : 0; }

vsmo_status vsmo_results_lroc_auc(const vsmo_results* results, double radius, double* out) {
  return guarded([&] {
    need(results, "results");
    need(out, "out");
    *out = vsmo::lroc_auc(results->rows, radius);
  });
}

vsmo_status vsmo_results_roc_auc(const vsmo_results* results, double* out) {
  return guarded([&] {
    need(results, "results");
    need(out, "out");
    *out = vsmo::roc_auc(results->rows);
  });
}

void vsmo_results_free(vsmo_results* results) { delete results; }

vsmo_status vsmo_score(const char* const* paths, size_t n_paths, double radius, const char* condition, char** out_csv) {
  return guarded([&] {
    need(out_csv, "out_csv");
    vsmo::require(n_paths > 0 && paths, vsmo::ErrorCode::invalid_parameter, "at least one results file is needed");
    std::vector<vsmo::LrocDataset> trials;
    for (size_t i = 0; i < n_paths; ++i) {
      need(paths[i], "path");
      trials.push_back(vsmo::read_results_csv(paths[i]));
    }
    const auto summary = vsmo::score_results(trials, radius, condition ? condition : "");
    *out_csv = copy_string(vsmo::score_summary_csv({summary}));
  });
}

// ---------------------------------------------------------------------------

vsmo_status vsmo_run_sweep(const vsmo_config* config, vsmo_progress_fn progress, void* user, int* failures) {
  return guarded([&] {
    need(config, "config");
    const auto report = vsmo::run_pinhole_sweep(config->config, progress_fn(progress, user));
    vsmo::write_report(config->config.output_dir, report);
    if (failures) *failures = report.failures();
  });
}

vsmo_status vsmo_run_training_study(const vsmo_config* config, vsmo_progress_fn progress, void* user, int* failures) {
  return guarded([&] {
    need(config, "config");
    const auto report = vsmo::run_training_size_study(config->config, progress_fn(progress, user));
    vsmo::write_report(config->config.output_dir, report);
    if (failures) *failures = report.failures();
  });
}

vsmo_status vsmo_run_correlation_study(const vsmo_config* config, vsmo_progress_fn progress, void* user) {
  return guarded([&] {
    need(config, "config");
    vsmo::write_report(config->config.output_dir, vsmo::run_correlation_study(config->config, progress_fn(progress, user)));
  });
}

// ---------------------------------------------------------------------------

vsmo_status vsmo_server_open(const char* config_path, const char* root, const char* host, int port,
                             vsmo_server** out, int* bound_port) {
  return make(out, [&] {
    vsmo::StudyConfig sc;
    if (config_path) sc = vsmo::parse_study_config(vsmo::read_text_file(config_path));
    sc = vsmo::study_config_from_env(sc);
    if (root) sc.root = root;
    if (host) sc.host = host;
    if (port >= 0) sc.port = port;
    sc.validate();
    auto s = std::make_unique<vsmo_server>();
    s->store = std::make_unique<vsmo::StudyStore>(sc);
    s->server = std::make_unique<vsmo::StudyServer>(*s->store);
    const int p = s->server->bind(sc.host, sc.port);
    if (bound_port) *bound_port = p;
    return s;
  });
}

vsmo_status vsmo_server_run(vsmo_server* server) {
  return guarded([&] {
    need(server, "server");
    server->server->run();
  });
}

void vsmo_server_stop(vsmo_server* server) {
  if (server) server->server->stop();
}

void vsmo_server_free(vsmo_server* server) { delete server; }

}  // extern "C"
