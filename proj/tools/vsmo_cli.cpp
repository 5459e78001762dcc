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

// vsmo command-line front end. Everything goes through the C API.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vsmo/vsmo.h"

namespace {

struct Failure {
  vsmo_status status;
};

void check(vsmo_status s, const char* what) {
  if (s == VSMO_OK) return;
  std::fprintf(stderr, "vsmo: %s failed (%s): %s\n", what, vsmo_status_name(s), vsmo_last_error());
  throw Failure{s};
}

void print_progress(const char* message, void*) { std::fprintf(stderr, "%s\n", message); }

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 0;
};

void add_common(CLI::App* app, Common& c, bool out_required, const char* out_help) {
  app->add_option("-c,--config", c.config, "Experiment config file")->check(CLI::ExistingFile);
  app->add_option("-s,--seed", c.seed, "Master seed (overrides the config)");
  auto* o = app->add_option("-o,--out", c.out, out_help);
  if (out_required) o->required();
  app->add_option("-j,--threads", c.threads, "Worker threads (overrides the config)")->check(CLI::PositiveNumber);
}

vsmo_config* open_config(const Common& c) {
  vsmo_config* cfg = nullptr;
  if (c.config.empty())
    check(vsmo_config_default(&cfg), "default config");
  else
    check(vsmo_config_load(c.config.c_str(), &cfg), "loading config");
  if (c.seed) check(vsmo_config_set_seed(cfg, *c.seed), "setting seed");
  if (c.threads > 0) check(vsmo_config_set_threads(cfg, c.threads), "setting threads");
  return cfg;
}

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  ~Handle() { Free(p); }
};

int run_experiment(const Common& c, const char* what,
                   vsmo_status (*fn)(const vsmo_config*, vsmo_progress_fn, void*, int*)) {
  Handle<vsmo_config, vsmo_config_free> cfg{open_config(c)};
  if (!c.out.empty()) check(vsmo_config_set_output_dir(cfg.p, c.out.c_str()), "setting output dir");
  int failures = 0;
  check(fn(cfg.p, print_progress, nullptr, &failures), what);
  char* dir = nullptr;
  check(vsmo_config_get_output_dir(cfg.p, &dir), "reading output dir");
  std::fprintf(stderr, "%s: tables written to %s (%d failed cells)\n", what, dir, failures);
  vsmo_string_free(dir);
  return failures == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thresholded visual-search model observer"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(vsmo_version()));

  Common sim;
  double diameter = 1.0;
  int pairs = 100;
  auto* simulate = app.add_subcommand("simulate", "Simulate a pinhole dataset (PGM + manifest)");
  add_common(simulate, sim, true, "Dataset directory");
  simulate->add_option("-d,--diameter", diameter, "Pinhole diameter relative to the lesion FWHM");
  simulate->add_option("-n,--pairs", pairs, "Lesion-present/absent pairs")->check(CLI::PositiveNumber);

  Common tr;
  std::string variant = "pw-thr", data_dir, design_dir;
  auto* train = app.add_subcommand("train", "Design and train an observer on a dataset");
  add_common(train, tr, true, "Observer file (JSON)");
  train->add_option("-V,--variant", variant, "Observer variant: pw, npw, with -thr and/or -shared");
  train->add_option("-D,--data", data_dir, "Training dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--design", design_dir, "Design dataset for bank refinement and feature choice (default: --data)")
      ->check(CLI::ExistingDirectory);

  std::string observer_path, eval_data, eval_out;
  int eval_threads = 1;
  double eval_radius = 9.4;
  auto* evaluate = app.add_subcommand("evaluate", "Rate and localize every case of a dataset");
  evaluate->add_option("-m,--observer", observer_path, "Observer file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("-D,--data", eval_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("-o,--out", eval_out, "Per-case results CSV")->required();
  evaluate->add_option("-j,--threads", eval_threads, "Worker threads")->check(CLI::PositiveNumber);
  evaluate->add_option("-r,--radius", eval_radius, "Localization radius (px) for the printed AUC");

  Common sw, ts, cs;
  auto* sweep = app.add_subcommand("sweep", "Pinhole-diameter sweep");
  add_common(sweep, sw, false, "Output directory (overrides the config)");
  auto* study = app.add_subcommand("training-study", "Training-set size study");
  add_common(study, ts, false, "Output directory (overrides the config)");
  auto* corr = app.add_subcommand("correlation-study", "Two-feature correlation study");
  add_common(corr, cs, false, "Output directory (overrides the config)");

  std::vector<std::string> score_files;
  double score_radius = 9.4;
  std::string score_condition, score_out;
  auto* score = app.add_subcommand("score", "LROC/ROC summary of per-case results files (one per trial)");
  score->add_option("files", score_files, "Results CSV files")->required()->check(CLI::ExistingFile);
  score->add_option("-r,--radius", score_radius, "Localization radius (px)");
  score->add_option("-C,--condition", score_condition, "Condition label for the summary row");
  score->add_option("-o,--out", score_out, "Summary CSV (default: stdout)");

  std::string serve_config, serve_root, serve_host;
  int serve_port = -1;
  auto* serve = app.add_subcommand("serve", "Run the reader-study HTTP service");
  serve->add_option("-c,--config", serve_config, "Study config file ([study] section)")->check(CLI::ExistingFile);
  serve->add_option("--root", serve_root, "Study root directory");
  serve->add_option("--host", serve_host, "Listen address");
  serve->add_option("-p,--port", serve_port, "Listen port (0: any free port)")->check(CLI::Range(0, 65535));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*simulate) {
      Handle<vsmo_config, vsmo_config_free> cfg{open_config(sim)};
      check(vsmo_config_set_diameter(cfg.p, diameter), "setting diameter");
      Handle<vsmo_dataset, vsmo_dataset_free> ds;
      check(vsmo_simulate(cfg.p, pairs, sim.seed.value_or(1), &ds.p), "simulate");
      check(vsmo_dataset_save(ds.p, sim.out.c_str()), "saving dataset");
      std::fprintf(stderr, "simulate: %zu cases written to %s\n", vsmo_dataset_size(ds.p), sim.out.c_str());
    } else if (*train) {
      Handle<vsmo_config, vsmo_config_free> cfg{open_config(tr)};
      Handle<vsmo_dataset, vsmo_dataset_free> data, design;
      check(vsmo_dataset_load(data_dir.c_str(), &data.p), "loading training set");
      if (!design_dir.empty()) check(vsmo_dataset_load(design_dir.c_str(), &design.p), "loading design set");
      Handle<vsmo_observer, vsmo_observer_free> obs;
      check(vsmo_train(cfg.p, variant.c_str(), design.p, data.p, &obs.p), "train");
      check(vsmo_observer_save(obs.p, tr.out.c_str()), "saving observer");
      std::fprintf(stderr, "train: %s observer written to %s\n", variant.c_str(), tr.out.c_str());
    } else if (*evaluate) {
      Handle<vsmo_observer, vsmo_observer_free> obs;
      check(vsmo_observer_load(observer_path.c_str(), &obs.p), "loading observer");
      Handle<vsmo_dataset, vsmo_dataset_free> data;
      check(vsmo_dataset_load(eval_data.c_str(), &data.p), "loading dataset");
      Handle<vsmo_results, vsmo_results_free> res;
      check(vsmo_evaluate(obs.p, data.p, eval_threads, &res.p), "evaluate");
      check(vsmo_results_save(res.p, eval_out.c_str()), "saving results");
      double lroc = 0, roc = 0;
      check(vsmo_results_lroc_auc(res.p, eval_radius, &lroc), "LROC AUC");
      check(vsmo_results_roc_auc(res.p, &roc), "ROC AUC");
      std::printf("cases=%zu lroc_auc=%.6f roc_auc=%.6f\n", vsmo_results_size(res.p), lroc, roc);
    } else if (*sweep) {
      return run_experiment(sw, "sweep", vsmo_run_sweep);
    } else if (*study) {
      return run_experiment(ts, "training-study", vsmo_run_training_study);
    } else if (*corr) {
      Handle<vsmo_config, vsmo_config_free> cfg{open_config(cs)};
      if (!cs.out.empty()) check(vsmo_config_set_output_dir(cfg.p, cs.out.c_str()), "setting output dir");
      check(vsmo_run_correlation_study(cfg.p, print_progress, nullptr), "correlation-study");
    } else if (*score) {
      std::vector<const char*> paths;
      for (const auto& f : score_files) paths.push_back(f.c_str());
      char* csv = nullptr;
      check(vsmo_score(paths.data(), paths.size(), score_radius, score_condition.c_str(), &csv), "score");
      if (score_out.empty()) {
        std::fputs(csv, stdout);
      } else {
        std::ofstream(score_out) << csv;
      }
      vsmo_string_free(csv);
    } else if (*serve) {
      Handle<vsmo_server, vsmo_server_free> srv;
      int port = 0;
      check(vsmo_server_open(serve_config.empty() ? nullptr : serve_config.c_str(),
                             serve_root.empty() ? nullptr : serve_root.c_str(),
                             serve_host.empty() ? nullptr : serve_host.c_str(), serve_port, &srv.p, &port),
            "starting service");
      std::fprintf(stderr, "serve: listening on port %d\n", port);
      check(vsmo_server_run(srv.p), "serve");
    }
  } catch (const Failure& f) {
    return f.status == VSMO_ERR_INTERNAL ? 70 : 2;
  }
  return 0;
}
