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

#include <nlohmann/json.hpp>
#include <set>
#include <thread>

#include "core/io.hpp"
#include "core/png_render.hpp"
#include "core/study.hpp"
#include "core/study_server.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

// After Eigen: the resolver header pulled in here defines _res.
#include <httplib.h>

namespace vsmo {
namespace {

using nlohmann::json;
using testing_support::TempDir;

PhantomSpec small_phantom() {
  PhantomSpec p;
  p.width = 48;
  p.height = 48;
  p.lump_mean = 8;
  p.lesion_margin = 10;
  return p;
}

const std::vector<Case>& condition_cases() {
  static const auto cases = generate_dataset(small_phantom(), PinholeSpec{}, 54, 54, 77);
  return cases;
}

StudyConfig config_at(const TempDir& dir, int training = 36, int testing = 72) {
  StudyConfig c;
  c.root = dir.path().string();
  c.training_trials = training;
  c.testing_trials = testing;
  c.seed = 5;
  return c;
}

void add_condition(const TempDir& dir, const std::string& name) {
  save_dataset(dir / ("conditions/" + name), condition_cases(), "test");
}

TrialResponse answer(const StudySession& s, std::size_t index, int rating, std::optional<Pixel> click = std::nullopt) {
  return {s.trials[index].trial_id, rating, click, 1200.0, {}};
}

TEST(PlanTrials, CountsPrevalenceAndOrder) {
  const auto plan = plan_trials(condition_cases(), 36, 72, 1);
  ASSERT_EQ(plan.size(), 108u);
  int train_present = 0, test_present = 0;
  std::set<std::string> ids, cases;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& t = plan[i];
    EXPECT_EQ(t.phase, i < 36 ? Phase::training : Phase::testing);
    if (t.lesion_present) (i < 36 ? train_present : test_present)++;
    EXPECT_EQ(t.lesion_present, t.lesion_location.has_value());
    ids.insert(t.trial_id);
    cases.insert(t.case_id);
  }
  EXPECT_EQ(train_present, 18);
  EXPECT_EQ(test_present, 36);
  EXPECT_EQ(ids.size(), 108u);
  EXPECT_EQ(cases.size(), 108u);
  EXPECT_EQ(plan[0].trial_id, "t000");

  const auto same = plan_trials(condition_cases(), 36, 72, 1);
  const auto other = plan_trials(condition_cases(), 36, 72, 2);
  auto order = [](const std::vector<StudyTrial>& p) {
    std::vector<std::string> v;
    for (const auto& t : p) v.push_back(t.case_id);
    return v;
  };
  EXPECT_EQ(order(plan), order(same));
  EXPECT_NE(order(plan), order(other));
  EXPECT_THROW((void)plan_trials(condition_cases(), 36, 74, 1), Error);
}

TEST(Store, FeedbackCarriesTruthOnlyInTraining) {
  TempDir dir;
  add_condition(dir, "d1");
  StudyStore store(config_at(dir, 2, 2));
  const auto s = store.create_session("reader", "d1");
  EXPECT_EQ(s.trials.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto t = store.next_trial(s.session_id);
    EXPECT_EQ(t.trial_id, s.trials[i].trial_id);
    EXPECT_EQ(t.trial_index, static_cast<int>(i));
    EXPECT_EQ(t.trial_count, 4);
    const Feedback fb = store.submit_response(s.session_id, answer(s, i, 3));
    EXPECT_EQ(fb.lesion_present.has_value(), i < 2);
    if (i < 2 && s.trials[i].lesion_present) EXPECT_EQ(fb.lesion_location, s.trials[i].lesion_location);
    if (i >= 2) EXPECT_FALSE(fb.lesion_location.has_value());
    EXPECT_EQ(fb.complete, i == 3);
  }
  try {
    (void)store.next_trial(s.session_id);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::session_complete);
  }
}

TEST(Store, ResponsesValidatedInOrder) {
  TempDir dir;
  add_condition(dir, "d1");
  StudyStore store(config_at(dir, 2, 2));
  const auto s = store.create_session("reader", "d1");
  auto code_of = [&](TrialResponse r) -> std::optional<ErrorCode> {
    try {
      store.submit_response(s.session_id, std::move(r));
    } catch (const Error& e) {
      return e.code();
    }
    return std::nullopt;
  };
  EXPECT_EQ(code_of(answer(s, 1, 3)), ErrorCode::conflict);
  EXPECT_EQ(code_of(answer(s, 0, 7)), ErrorCode::validation);
  EXPECT_EQ(code_of(answer(s, 0, 0)), ErrorCode::validation);
  EXPECT_EQ(code_of(answer(s, 0, 3, Pixel{48, 0})), ErrorCode::validation);
  auto bad_time = answer(s, 0, 3);
  bad_time.response_time_ms = -1;
  EXPECT_EQ(code_of(bad_time), ErrorCode::validation);
  EXPECT_FALSE(code_of(answer(s, 0, 3, Pixel{47, 47})).has_value());
  EXPECT_EQ(code_of(answer(s, 0, 3)), ErrorCode::conflict);
  EXPECT_EQ(code_of({"t999", 3, std::nullopt, 1.0, {}}), ErrorCode::conflict);
  try {
    (void)store.session("s999999");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_found);
  }
}

TEST(Store, ReplayedAnswerLeavesLogUnchanged) {
  TempDir dir;
  add_condition(dir, "d1");
  StudyStore store(config_at(dir, 2, 2));
  const auto s = store.create_session("reader", "d1");
  store.submit_response(s.session_id, answer(s, 0, 4));
  const auto log = dir / ("sessions/" + s.session_id + ".ndjson");
  const std::string before = read_text_file(log);
  EXPECT_THROW(store.submit_response(s.session_id, answer(s, 0, 5)), Error);
  EXPECT_EQ(read_text_file(log), before);
  EXPECT_EQ(store.session(s.session_id).responses.size(), 1u);
}

TEST(Store, SurvivesRestart) {
  TempDir dir;
  add_condition(dir, "d1");
  std::string id;
  StudySession before;
  {
    StudyStore store(config_at(dir, 2, 2));
    before = store.create_session("reader", "d1", 1234);
    id = before.session_id;
    store.submit_response(id, answer(before, 0, 2, Pixel{3, 4}));
    store.submit_response(id, answer(before, 1, 5));
  }
  StudyStore again(config_at(dir, 2, 2));
  const auto s = again.session(id);
  EXPECT_EQ(s.seed, 1234u);
  ASSERT_EQ(s.responses.size(), 2u);
  EXPECT_EQ(s.responses[0].click, (Pixel{3, 4}));
  EXPECT_EQ(s.responses[1].rating, 5);
  EXPECT_FALSE(s.responses[0].received_at.empty());
  EXPECT_EQ(again.next_trial(id).trial_index, 2);
  EXPECT_NE(again.create_session("other", "d1").session_id, id);
  const json index = json::parse(read_text_file(dir / "sessions/index.json"));
  EXPECT_EQ(index["version"], 1);
  EXPECT_EQ(index["sessions"].size(), 2u);
}

TEST(Store, TornFinalLineIgnored) {
  TempDir dir;
  add_condition(dir, "d1");
  std::string id;
  {
    StudyStore store(config_at(dir, 2, 2));
    const auto s = store.create_session("reader", "d1");
    id = s.session_id;
    store.submit_response(id, answer(s, 0, 2));
  }
  const auto log = dir / ("sessions/" + id + ".ndjson");
  write_text_file(log, read_text_file(log) + "{\"type\":\"resp");
  StudyStore again(config_at(dir, 2, 2));
  EXPECT_EQ(again.session(id).responses.size(), 1u);
  write_text_file(log, "garbage\n" + read_text_file(log));
  EXPECT_THROW(StudyStore(config_at(dir, 2, 2)), Error);
}

TEST(Store, ExportNeedsCompleteSession) {
  TempDir dir;
  add_condition(dir, "d1");
  StudyStore store(config_at(dir, 2, 2));
  const auto s = store.create_session("reader", "d1");
  try {
    (void)store.export_results(s.session_id);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::precondition);
  }
}

TEST(Store, RoundTripGivesExactAuc) {
  TempDir dir;
  add_condition(dir, "d1");
  StudyStore store(config_at(dir, 2, 2));
  for (bool good : {true, false}) {
    const auto s = store.create_session("reader", "d1");
    store.submit_response(s.session_id, answer(s, 0, 1));
    store.submit_response(s.session_id, answer(s, 1, 1));
    for (std::size_t i = 2; i < 4; ++i) {
      const auto& t = s.trials[i];
      const int rating = (t.lesion_present == good) ? 6 : 2;
      store.submit_response(s.session_id, answer(s, i, rating, t.lesion_location));
    }
    const LrocDataset d = store.export_results(s.session_id);
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(lroc_auc(d, 9.4), good ? 1.0 : 0.0);
    EXPECT_EQ(lroc_auc(d, 9.4), oracle::lroc_by_pairs(d, 9.4));
    const auto back = parse_results_csv(write_results_csv(d));
    EXPECT_EQ(lroc_auc(back, 9.4), lroc_auc(d, 9.4));
  }
}

TEST(Store, NamesAndConditions) {
  TempDir dir;
  add_condition(dir, "d1");
  add_condition(dir, "d2");
  StudyStore store(config_at(dir, 2, 2));
  EXPECT_EQ(store.conditions(), (std::vector<std::string>{"d1", "d2"}));
  EXPECT_THROW(store.create_session("bad name", "d1"), Error);
  EXPECT_THROW(store.create_session("reader", "../d1"), Error);
  try {
    store.create_session("reader", "d3");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::not_found);
  }
}

TEST(Store, SeedsSetOrder) {
  TempDir dir;
  add_condition(dir, "d1");
  StudyStore store(config_at(dir));
  const auto a = store.create_session("r", "d1", 42);
  const auto b = store.create_session("r", "d1", 42);
  const auto c = store.create_session("r", "d1", 43);
  auto order = [](const StudySession& s) {
    std::vector<std::string> v;
    for (const auto& t : s.trials) v.push_back(t.case_id);
    return v;
  };
  EXPECT_EQ(a.trials.size(), 108u);
  EXPECT_EQ(order(a), order(b));
  EXPECT_NE(order(a), order(c));
  EXPECT_NE(store.create_session("r", "d1").seed, store.create_session("r", "d1").seed);
}

TEST(Store, TrialImageUsesSessionWindow) {
  TempDir dir;
  add_condition(dir, "d1");
  StudyStore store(config_at(dir, 2, 2));
  const auto s = store.create_session("r", "d1");
  const auto png = decode_png_gray8(store.trial_png(s.session_id, s.trials[0].trial_id));
  EXPECT_EQ(png.width, 48);
  const Case* c = nullptr;
  for (const auto& k : condition_cases())
    if (k.id == s.trials[0].case_id) c = &k;
  ASSERT_NE(c, nullptr);
  EXPECT_EQ(png.pixels, apply_window(c->image, s.window_low, s.window_high));
  EXPECT_THROW((void)store.trial_png(s.session_id, "t999"), Error);
}

// --- HTTP -------------------------------------------------------------------

class Http : public ::testing::Test {
 protected:
  void SetUp() override {
    add_condition(dir_, "d1");
    store_ = std::make_unique<StudyStore>(config_at(dir_, 2, 2));
    server_ = std::make_unique<StudyServer>(*store_);
    port_ = server_->bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_->run(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    for (int i = 0; i < 100 && !client_->Get("/healthz"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  void TearDown() override {
    server_->stop();
    thread_.join();
  }

  json post(const std::string& path, const json& body, int expect) {
    auto r = client_->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(r);
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << path << " " << r->body;
    return json::parse(r->body);
  }
  json get(const std::string& path, int expect) {
    auto r = client_->Get(path);
    EXPECT_TRUE(r);
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << path << " " << r->body;
    EXPECT_EQ(r->get_header_value("Content-Type"), "application/json");
    return json::parse(r->body);
  }

  TempDir dir_;
  std::unique_ptr<StudyStore> store_;
  std::unique_ptr<StudyServer> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(Http, FullSessionIsBlinded) {
  EXPECT_EQ(get("/healthz", 200)["status"], "ok");
  EXPECT_EQ(get("/api/v1/conditions", 200)["conditions"], json::array({"d1"}));
  const json created = post("/api/v1/sessions", {{"version", 1}, {"observer_id", "r1"}, {"condition", "d1"}}, 201);
  const json s = created["session"];
  const std::string id = s["session_id"];
  for (const char* k : {"session_id", "observer_id", "condition", "seed", "rating_min", "rating_max", "window_low",
                        "window_high", "width", "height", "training_trials", "testing_trials", "answered", "complete"})
    EXPECT_TRUE(s.contains(k)) << k;
  EXPECT_FALSE(s.contains("trials"));
  EXPECT_EQ(s["training_trials"], 2);
  EXPECT_EQ(get("/api/v1/sessions/" + id, 200)["session"], s);

  const auto truth = store_->session(id).trials;
  for (int i = 0; i < 4; ++i) {
    const json t = get("/api/v1/sessions/" + id + "/next", 200)["trial"];
    EXPECT_EQ(t.size(), 8u);
    EXPECT_EQ(t["trial_index"], i);
    EXPECT_EQ(t["phase"], i < 2 ? "training" : "testing");
    EXPECT_FALSE(t.contains("lesion_present"));
    EXPECT_FALSE(t.contains("case_id"));
    const auto img = client_->Get(t["image_url"].get<std::string>());
    ASSERT_TRUE(img);
    EXPECT_EQ(img->status, 200);
    EXPECT_EQ(img->get_header_value("Content-Type"), "image/png");
    EXPECT_EQ(decode_png_gray8(img->body).width, 48);

    const auto& tr = truth[static_cast<std::size_t>(i)];
    json click = tr.lesion_location ? json{{"x", tr.lesion_location->x}, {"y", tr.lesion_location->y}} : json();
    const json fb = post("/api/v1/sessions/" + id + "/responses",
                         {{"version", 1}, {"trial_id", t["trial_id"]}, {"rating", tr.lesion_present ? 6 : 1},
                          {"click", click}, {"response_time_ms", 900.5}},
                         200)["feedback"];
    EXPECT_EQ(fb.contains("lesion_present"), i < 2);
    EXPECT_EQ(fb.contains("lesion_location"), i < 2);
    EXPECT_EQ(fb["complete"], i == 3);
  }
  EXPECT_EQ(get("/api/v1/sessions/" + id + "/next", 410)["error"]["code"], "session-complete");
  const auto csv = client_->Get("/api/v1/sessions/" + id + "/export");
  ASSERT_TRUE(csv);
  EXPECT_EQ(csv->status, 200);
  EXPECT_EQ(csv->get_header_value("Content-Type"), "text/csv");
  const auto d = parse_results_csv(csv->body);
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(lroc_auc(d, 9.4), 1.0);
  const json list = get("/api/v1/sessions", 200)["sessions"];
  ASSERT_EQ(list.size(), 1u);
  EXPECT_EQ(list[0]["complete"], true);
}

TEST_F(Http, ErrorStatuses) {
  const std::string id =
      post("/api/v1/sessions", {{"version", 1}, {"observer_id", "r1"}, {"condition", "d1"}, {"seed", 3}}, 201)["session"]
                                                                                                       ["session_id"];
  const json e404 = get("/api/v1/sessions/s424242", 404);
  EXPECT_EQ(e404["version"], 1);
  EXPECT_EQ(e404["error"]["code"], "not-found");
  EXPECT_TRUE(e404["error"]["message"].is_string());
  get("/api/v1/sessions/" + id + "/export", 412);
  post("/api/v1/sessions", {{"observer_id", "r1"}, {"condition", "d1"}}, 422);
  post("/api/v1/sessions", {{"version", 2}, {"observer_id", "r1"}, {"condition", "d1"}}, 422);
  post("/api/v1/sessions", {{"version", 1}, {"condition", "d1"}}, 422);
  post("/api/v1/sessions", {{"version", 1}, {"observer_id", "r1"}, {"condition", "nope"}}, 404);

  const std::string tid = store_->session(id).trials[0].trial_id;
  const std::string other = store_->session(id).trials[1].trial_id;
  const std::string url = "/api/v1/sessions/" + id + "/responses";
  auto body = [](const std::string& t, json rating) {
    return json{{"version", 1}, {"trial_id", t}, {"rating", rating}, {"click", nullptr}, {"response_time_ms", 10}};
  };
  post(url, body(other, 3), 409);
  post(url, body(tid, 9), 422);
  post(url, body(tid, 2.5), 422);
  post(url, body(tid, "3"), 422);
  json bad_click = body(tid, 3);
  bad_click["click"] = {{"x", 1}};
  post(url, bad_click, 422);
  auto raw = client_->Post(url, "{not json", "application/json");
  ASSERT_TRUE(raw);
  EXPECT_EQ(raw->status, 422);
  post(url, body(tid, 3), 200);
  post(url, body(tid, 3), 409);
  auto missing = client_->Get("/api/v1/sessions/" + id + "/trials/t999/image");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
}

}  // namespace
}  // namespace vsmo
