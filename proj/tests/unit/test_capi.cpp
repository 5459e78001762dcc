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

#include <gtest/gtest.h>
#include <httplib.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>

#include "support/tempdir.hpp"

namespace {

using vsmo::testing_support::TempDir;

const char* kTiny = R"(
[experiment]
seed = 11
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
variants = pw, npw-thr
features_per_stage = 2
[sweep]
diameters = 1.0
design_pairs = 12
train_pairs = 12
test_pairs = 10
trials = 2
[training_study]
sizes = 10
trials = 2
test_pairs = 10
design_pairs = 12
[correlation]
rhos = 0, 0.5
samples = 500
)";

std::string take(char* s) {
  std::string out = s ? s : "";
  vsmo_string_free(s);
  return out;
}

struct Config {
  vsmo_config* p = nullptr;
  Config() { EXPECT_EQ(vsmo_config_parse(kTiny, &p), VSMO_OK) << vsmo_last_error(); }
  ~Config() { vsmo_config_free(p); }
};

TEST(CApi, VersionAndStatusNames) {
  EXPECT_GT(std::strlen(vsmo_version()), 0u);
  EXPECT_STREQ(vsmo_status_name(VSMO_OK), "ok");
  EXPECT_STREQ(vsmo_status_name(VSMO_ERR_NOT_FOUND), "not-found");
  EXPECT_STREQ(vsmo_status_name(VSMO_ERR_NULL_ARGUMENT), "null-argument");
  EXPECT_STREQ(vsmo_status_name(VSMO_ERR_INTERNAL), "internal");
}

TEST(CApi, NullArgumentsAndErrors) {
  EXPECT_EQ(vsmo_config_default(nullptr), VSMO_ERR_NULL_ARGUMENT);
  vsmo_config* c = nullptr;
  EXPECT_EQ(vsmo_config_load(nullptr, &c), VSMO_ERR_NULL_ARGUMENT);
  EXPECT_EQ(c, nullptr);
  EXPECT_GT(std::strlen(vsmo_last_error()), 0u);
  EXPECT_EQ(vsmo_config_parse("[experiment]\nbogus = 1\n", &c), VSMO_ERR_PARSE);
  EXPECT_NE(std::string(vsmo_last_error()).find("bogus"), std::string::npos);
  EXPECT_EQ(vsmo_config_load("/nonexistent/x.toml", &c), VSMO_ERR_IO);
  EXPECT_EQ(vsmo_config_set_seed(nullptr, 1), VSMO_ERR_NULL_ARGUMENT);
  EXPECT_EQ(vsmo_config_default(&c), VSMO_OK);
  EXPECT_STREQ(vsmo_last_error(), "");
  EXPECT_EQ(vsmo_config_set_threads(c, 0), VSMO_ERR_INVALID_PARAMETER);
  EXPECT_EQ(vsmo_config_set_diameter(c, -1.0), VSMO_ERR_INVALID_PARAMETER);
  vsmo_config_free(c);
  vsmo_config_free(nullptr);
  vsmo_dataset_free(nullptr);
  vsmo_observer_free(nullptr);
  vsmo_results_free(nullptr);
  vsmo_server_free(nullptr);
  EXPECT_EQ(vsmo_dataset_size(nullptr), 0u);
}

TEST(CApi, ConfigHashFollowsSeed) {
  Config a, b;
  char* h1 = nullptr;
  ASSERT_EQ(vsmo_config_hash(a.p, &h1), VSMO_OK);
  const std::string ha = take(h1);
  ASSERT_EQ(vsmo_config_set_seed(b.p, 12), VSMO_OK);
  ASSERT_EQ(vsmo_config_hash(b.p, &h1), VSMO_OK);
  EXPECT_NE(ha, take(h1));
  ASSERT_EQ(vsmo_config_set_output_dir(a.p, "/tmp/out-here"), VSMO_OK);
  ASSERT_EQ(vsmo_config_hash(a.p, &h1), VSMO_OK);
  EXPECT_EQ(ha, take(h1));
  ASSERT_EQ(vsmo_config_get_output_dir(a.p, &h1), VSMO_OK);
  EXPECT_EQ(take(h1), "/tmp/out-here");
}

TEST(CApi, SimulateTrainEvaluateScore) {
  TempDir dir;
  Config cfg;
  vsmo_dataset *train = nullptr, *test = nullptr, *loaded = nullptr;
  ASSERT_EQ(vsmo_simulate(cfg.p, 12, 1, &train), VSMO_OK) << vsmo_last_error();
  ASSERT_EQ(vsmo_simulate(cfg.p, 10, 2, &test), VSMO_OK);
  EXPECT_EQ(vsmo_dataset_size(train), 24u);
  ASSERT_EQ(vsmo_dataset_save(train, (dir / "train").c_str()), VSMO_OK);
  ASSERT_EQ(vsmo_dataset_load((dir / "train").c_str(), &loaded), VSMO_OK);
  EXPECT_EQ(vsmo_dataset_size(loaded), 24u);
  EXPECT_TRUE(std::filesystem::exists(dir / "train/manifest.csv"));

  vsmo_observer *obs = nullptr, *back = nullptr;
  EXPECT_EQ(vsmo_train(cfg.p, "hotelling", nullptr, loaded, &obs), VSMO_ERR_INVALID_PARAMETER);
  ASSERT_EQ(vsmo_train(cfg.p, "pw-thr", nullptr, loaded, &obs), VSMO_OK) << vsmo_last_error();
  ASSERT_EQ(vsmo_observer_save(obs, (dir / "obs.json").c_str()), VSMO_OK);
  ASSERT_EQ(vsmo_observer_load((dir / "obs.json").c_str(), &back), VSMO_OK);

  vsmo_results *r1 = nullptr, *r2 = nullptr, *r3 = nullptr;
  ASSERT_EQ(vsmo_evaluate(obs, test, 1, &r1), VSMO_OK);
  ASSERT_EQ(vsmo_evaluate(back, test, 2, &r2), VSMO_OK);
  EXPECT_EQ(vsmo_results_size(r1), 20u);
  double a1 = 0, a2 = 0, roc = 0;
  ASSERT_EQ(vsmo_results_lroc_auc(r1, 9.4, &a1), VSMO_OK);
  ASSERT_EQ(vsmo_results_lroc_auc(r2, 9.4, &a2), VSMO_OK);
  ASSERT_EQ(vsmo_results_roc_auc(r1, &roc), VSMO_OK);
  EXPECT_EQ(a1, a2);
  EXPECT_LE(a1, roc);
  EXPECT_EQ(vsmo_results_lroc_auc(r1, 9.4, nullptr), VSMO_ERR_NULL_ARGUMENT);

  const std::string csv1 = (dir / "r1.csv").string(), csv2 = (dir / "r2.csv").string();
  ASSERT_EQ(vsmo_results_save(r1, csv1.c_str()), VSMO_OK);
  ASSERT_EQ(vsmo_results_save(r2, csv2.c_str()), VSMO_OK);
  ASSERT_EQ(vsmo_results_load(csv1.c_str(), &r3), VSMO_OK);
  double a3 = 0;
  ASSERT_EQ(vsmo_results_lroc_auc(r3, 9.4, &a3), VSMO_OK);
  EXPECT_EQ(a1, a3);

  const char* paths[] = {csv1.c_str(), csv2.c_str()};
  char* summary = nullptr;
  ASSERT_EQ(vsmo_score(paths, 2, 9.4, "tiny", &summary), VSMO_OK);
  const std::string s = take(summary);
  EXPECT_EQ(s.substr(0, s.find('\n')), "condition,auc,se,n_trials,radius,roc_auc");
  EXPECT_NE(s.find("tiny,"), std::string::npos);
  EXPECT_EQ(vsmo_score(paths, 0, 9.4, "x", &summary), VSMO_ERR_INVALID_PARAMETER);

  for (auto* r : {r1, r2, r3}) vsmo_results_free(r);
  vsmo_observer_free(obs);
  vsmo_observer_free(back);
  for (auto* d : {train, test, loaded}) vsmo_dataset_free(d);
}

TEST(CApi, ExperimentsWriteTables) {
  TempDir dir;
  Config cfg;
  ASSERT_EQ(vsmo_config_set_output_dir(cfg.p, dir.path().c_str()), VSMO_OK);
  int lines = 0;
  auto count = [](const char*, void* user) { ++*static_cast<int*>(user); };
  int failures = -1;
  ASSERT_EQ(vsmo_run_sweep(cfg.p, count, &lines, &failures), VSMO_OK) << vsmo_last_error();
  EXPECT_EQ(failures, 0) << std::ifstream(dir / "sweep.csv").rdbuf();
  EXPECT_GT(lines, 0);
  ASSERT_EQ(vsmo_run_training_study(cfg.p, nullptr, nullptr, &failures), VSMO_OK);
  EXPECT_EQ(failures, 0);
  ASSERT_EQ(vsmo_run_correlation_study(cfg.p, nullptr, nullptr), VSMO_OK);
  for (const char* f : {"sweep.csv", "sweep_trials.csv", "training_study.csv", "training_study_trials.csv",
                        "correlation.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  std::ifstream in(dir / "sweep.csv");
  int rows = 0;
  for (std::string l; std::getline(in, l);) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST(CApi, ServerLifecycle) {
  TempDir dir;
  vsmo_server* srv = nullptr;
  int port = -1;
  ASSERT_EQ(vsmo_server_open(nullptr, dir.path().c_str(), "127.0.0.1", 0, &srv, &port), VSMO_OK) << vsmo_last_error();
  EXPECT_GT(port, 0);
  std::thread t([srv] { EXPECT_EQ(vsmo_server_run(srv), VSMO_OK); });
  httplib::Client client("127.0.0.1", port);
  httplib::Result r;
  for (int i = 0; i < 100 && !(r = client.Get("/healthz")); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  vsmo_server_stop(srv);
  t.join();
  vsmo_server_free(srv);
  EXPECT_TRUE(std::filesystem::exists(dir / "sessions/index.json"));
  EXPECT_EQ(vsmo_server_open(nullptr, dir.path().c_str(), "127.0.0.1", 70000, &srv, &port), VSMO_ERR_INVALID_PARAMETER);
}

}  // namespace
