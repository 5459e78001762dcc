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

#include "core/study.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "core/config.hpp"
#include "core/png_render.hpp"

namespace vsmo {

namespace fs = std::filesystem;
using nlohmann::json;

void StudyConfig::validate() const {
  require(!root.empty(), ErrorCode::invalid_parameter, "study root must not be empty");
  require(port >= 0 && port <= 65535, ErrorCode::invalid_parameter, "port must be in [0, 65535]");
  require(training_trials >= 0 && testing_trials >= 2 && training_trials % 2 == 0 && testing_trials % 2 == 0,
          ErrorCode::invalid_parameter, "trial counts must be even (50% prevalence) with at least 2 testing trials");
  require(rating_min < rating_max, ErrorCode::invalid_parameter, "rating scale needs min < max");
  require(window_low.has_value() == window_high.has_value(), ErrorCode::invalid_parameter,
          "set both window_low and window_high or neither");
  if (window_low) require(*window_high > *window_low, ErrorCode::invalid_parameter, "window_high must exceed window_low");
}

StudyConfig parse_study_config(const std::string& text) {
  auto sections = parse_config_sections(text, {"study"});
  auto& s = sections.at("study");
  StudyConfig c;
  s.read("root", c.root);
  s.read("host", c.host);
  s.read("port", c.port);
  s.read("training_trials", c.training_trials);
  s.read("testing_trials", c.testing_trials);
  s.read("rating_min", c.rating_min);
  s.read("rating_max", c.rating_max);
  s.read("seed", c.seed);
  double lo = std::nan(""), hi = std::nan("");
  s.read("window_low", lo);
  s.read("window_high", hi);
  if (!std::isnan(lo)) c.window_low = lo;
  if (!std::isnan(hi)) c.window_high = hi;
  s.finish();
  c.validate();
  return c;
}

StudyConfig study_config_from_env(StudyConfig c) {
  if (const char* v = std::getenv("VSMO_STUDY_ROOT"); v && *v) c.root = v;
  if (const char* v = std::getenv("VSMO_STUDY_HOST"); v && *v) c.host = v;
  if (const char* v = std::getenv("VSMO_STUDY_PORT"); v && *v) {
    try {
      c.port = std::stoi(v);
    } catch (const std::logic_error&) {
      fail(ErrorCode::invalid_parameter, std::string("VSMO_STUDY_PORT is not a number: ") + v);
    }
  }
  c.validate();
  return c;
}

const char* to_string(Phase p) noexcept { return p == Phase::training ? "training" : "testing"; }

int StudySession::training_count() const {
  return static_cast<int>(std::count_if(trials.begin(), trials.end(), [](const StudyTrial& t) { return t.phase == Phase::training; }));
}

// ---------------------------------------------------------------------------

std::vector<StudyTrial> plan_trials(const std::vector<Case>& cases, int training_trials, int testing_trials,
                                    std::uint64_t seed) {
  require(training_trials % 2 == 0 && testing_trials % 2 == 0, ErrorCode::invalid_parameter, "trial counts must be even");
  std::vector<const Case*> present, absent;
  for (const auto& c : cases) (c.lesion_present ? present : absent).push_back(&c);
  const auto need = static_cast<std::size_t>((training_trials + testing_trials) / 2);
  require(present.size() >= need && absent.size() >= need, ErrorCode::invalid_input,
          "condition needs " + std::to_string(need) + " lesion-present and lesion-absent cases");

  std::vector<StudyTrial> out;
  auto phase = [&](Phase ph, std::size_t from, std::size_t n, std::string_view label) {
    std::vector<StudyTrial> block;
    for (std::size_t i = from; i < from + n; ++i)
      for (const Case* c : {present[i], absent[i]})
        block.push_back({"", c->id, ph, c->lesion_present, c->lesion_location});
    Rng rng(derive_seed(seed, label));
    std::shuffle(block.begin(), block.end(), rng);
    out.insert(out.end(), block.begin(), block.end());
  };
  phase(Phase::training, 0, static_cast<std::size_t>(training_trials / 2), "training");
  phase(Phase::testing, static_cast<std::size_t>(training_trials / 2), static_cast<std::size_t>(testing_trials / 2),
        "testing");
  for (std::size_t i = 0; i < out.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "t%03zu", i);
    out[i].trial_id = id;
  }
  return out;
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

void check_name(const std::string& s, const char* what) {
  require(!s.empty() && s.size() <= 64 && s != "." && s != ".." &&
              std::all_of(s.begin(), s.end(),
                          [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.' || c == '='; }),
          ErrorCode::validation, std::string(what) + " may only hold letters, digits and _ - . =");
}

json location_json(const std::optional<Pixel>& p) {
  return p ? json{{"x", p->x}, {"y", p->y}} : json(nullptr);
}

std::optional<Pixel> location_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return Pixel{j.at("x").get<int>(), j.at("y").get<int>()};
}

json session_record(const StudySession& s) {
  json trials = json::array();
  for (const auto& t : s.trials)
    trials.push_back({{"trial_id", t.trial_id},
                      {"case_id", t.case_id},
                      {"phase", to_string(t.phase)},
                      {"lesion_present", t.lesion_present},
                      {"lesion_location", location_json(t.lesion_location)}});
  return {{"type", "session"},      {"version", 1},           {"session_id", s.session_id},
          {"observer_id", s.observer_id}, {"condition", s.condition}, {"seed", s.seed},
          {"rating_min", s.rating_min}, {"rating_max", s.rating_max}, {"window_low", s.window_low},
          {"window_high", s.window_high}, {"width", s.width},       {"height", s.height},
          {"trials", trials}};
}

json response_record(const TrialResponse& r) {
  return {{"type", "response"},
          {"version", 1},
          {"trial_id", r.trial_id},
          {"rating", r.rating},
          {"click", location_json(r.click)},
          {"response_time_ms", r.response_time_ms},
          {"received_at", r.received_at}};
}

}  // namespace

StudyStore::StudyStore(StudyConfig config) : config_(std::move(config)), root_(config_.root) {
  config_.validate();
  std::error_code ec;
  fs::create_directories(root_ / "sessions", ec);
  require(!ec, ErrorCode::io, "cannot create " + (root_ / "sessions").string() + ": " + ec.message());
  std::vector<fs::path> logs;
  for (const auto& e : fs::directory_iterator(root_ / "sessions"))
    if (e.is_regular_file() && e.path().extension() == ".ndjson") logs.push_back(e.path());
  std::sort(logs.begin(), logs.end());
  for (const auto& log : logs) replay(log);
  write_index();
}

void StudyStore::replay(const fs::path& log) {
  const std::string text = read_text_file(log);
  std::istringstream is(text);
  std::string line;
  auto e = std::make_shared<Entry>();
  bool have_session = false;
  std::size_t consumed = 0;
  while (std::getline(is, line)) {
    consumed += line.size() + 1;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      // A torn final line is an unacknowledged write; anything else is corruption.
      require(consumed > text.size(), ErrorCode::parse, "corrupt session log " + log.string());
      break;
    }
    try {
      if (j.at("type") == "session") {
        auto& s = e->session;
        s.session_id = j.at("session_id").get<std::string>();
        s.observer_id = j.at("observer_id").get<std::string>();
        s.condition = j.at("condition").get<std::string>();
        s.seed = j.at("seed").get<std::uint64_t>();
        s.rating_min = j.at("rating_min").get<int>();
        s.rating_max = j.at("rating_max").get<int>();
        s.window_low = j.at("window_low").get<double>();
        s.window_high = j.at("window_high").get<double>();
        s.width = j.at("width").get<int>();
        s.height = j.at("height").get<int>();
        for (const auto& t : j.at("trials"))
          s.trials.push_back({t.at("trial_id").get<std::string>(), t.at("case_id").get<std::string>(),
                              t.at("phase") == "training" ? Phase::training : Phase::testing,
                              t.at("lesion_present").get<bool>(), location_from(t.at("lesion_location"))});
        have_session = true;
      } else if (j.at("type") == "response") {
        require(have_session, ErrorCode::parse, "response before session record in " + log.string());
        e->session.responses.push_back({j.at("trial_id").get<std::string>(), j.at("rating").get<int>(),
                                        location_from(j.at("click")), j.at("response_time_ms").get<double>(),
                                        j.at("received_at").get<std::string>()});
      }
    } catch (const json::exception& ex) {
      fail(ErrorCode::parse, "bad record in " + log.string() + ": " + ex.what());
    }
  }
  if (!have_session) return;
  const std::string id = e->session.session_id;
  if (id.size() > 1 && id[0] == 's') {
    try {
      next_session_ = std::max(next_session_, std::stoi(id.substr(1)) + 1);
    } catch (const std::logic_error&) {
    }
  }
  sessions_[id] = std::move(e);
}

std::vector<std::string> StudyStore::conditions() const {
  std::vector<std::string> out;
  const fs::path dir = root_ / "conditions";
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "manifest.csv")) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

const StudyStore::Condition& StudyStore::condition(const std::string& name) const {
  check_name(name, "condition");
  std::lock_guard lock(conditions_mutex_);
  if (auto it = conditions_.find(name); it != conditions_.end()) return *it->second;
  const fs::path dir = root_ / "conditions" / name;
  require(fs::exists(dir / "manifest.csv"), ErrorCode::not_found, "unknown condition: " + name);
  auto c = std::make_unique<Condition>();
  c->cases = load_dataset(dir);
  require(!c->cases.empty(), ErrorCode::invalid_input, "condition has no cases: " + name);
  if (config_.window_low) {
    c->low = *config_.window_low;
    c->high = *config_.window_high;
  } else {
    c->low = std::numeric_limits<double>::infinity();
    c->high = -std::numeric_limits<double>::infinity();
    for (const auto& k : c->cases)
      for (double v : k.image.data()) {
        c->low = std::min(c->low, v);
        c->high = std::max(c->high, v);
      }
    if (!(c->high > c->low)) c->high = c->low + 1.0;
  }
  return *conditions_.emplace(name, std::move(c)).first->second;
}

std::shared_ptr<StudyStore::Entry> StudyStore::entry(const std::string& session_id) const {
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(session_id);
  require(it != sessions_.end(), ErrorCode::not_found, "unknown session: " + session_id);
  return it->second;
}

void StudyStore::append_log(const std::string& session_id, const std::string& line) const {
  const fs::path path = root_ / "sessions" / (session_id + ".ndjson");
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  require(fd >= 0, ErrorCode::io, "cannot open session log " + path.string());
  const std::string data = line + "\n";
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n <= 0) {
      ::close(fd);
      fail(ErrorCode::io, "failed writing session log " + path.string());
    }
    done += static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  ::close(fd);
  require(synced, ErrorCode::io, "failed syncing session log " + path.string());
}

void StudyStore::write_index() const {
  std::lock_guard lock(index_mutex_);
  json arr = json::array();
  for (const auto& s : sessions())
    arr.push_back({{"session_id", s.session_id},
                   {"observer_id", s.observer_id},
                   {"condition", s.condition},
                   {"answered", s.answered},
                   {"trials", s.trials},
                   {"complete", s.complete}});
  write_text_file(root_ / "sessions" / "index.json", json{{"version", 1}, {"sessions", arr}}.dump(1) + "\n");
}

StudySession StudyStore::create_session(const std::string& observer_id, const std::string& condition_name,
                                        std::optional<std::uint64_t> seed) {
  check_name(observer_id, "observer id");
  const Condition& cond = condition(condition_name);
  auto e = std::make_shared<Entry>();
  {
    std::lock_guard lock(sessions_mutex_);
    char id[16];
    std::snprintf(id, sizeof id, "s%06d", next_session_++);
    auto& s = e->session;
    s.session_id = id;
    s.observer_id = observer_id;
    s.condition = condition_name;
    s.seed = seed ? *seed : derive_seed(config_.seed, "session/" + s.session_id);
    s.rating_min = config_.rating_min;
    s.rating_max = config_.rating_max;
    s.window_low = cond.low;
    s.window_high = cond.high;
    s.width = cond.cases.front().image.width();
    s.height = cond.cases.front().image.height();
    s.trials = plan_trials(cond.cases, config_.training_trials, config_.testing_trials, s.seed);
    append_log(s.session_id, session_record(s).dump());
    sessions_[s.session_id] = e;
  }
  write_index();
  std::lock_guard lock(e->mutex);
  return e->session;
}

StudySession StudyStore::session(const std::string& session_id) const {
  auto e = entry(session_id);
  std::lock_guard lock(e->mutex);
  return e->session;
}

std::vector<SessionSummary> StudyStore::sessions() const {
  std::vector<std::shared_ptr<Entry>> entries;
  {
    std::lock_guard lock(sessions_mutex_);
    for (const auto& [id, e] : sessions_) entries.push_back(e);
  }
  std::vector<SessionSummary> out;
  for (const auto& e : entries) {
    std::lock_guard lock(e->mutex);
    const auto& s = e->session;
    out.push_back({s.session_id, s.observer_id, s.condition, static_cast<int>(s.responses.size()),
                   static_cast<int>(s.trials.size()), s.complete()});
  }
  return out;
}

TrialPayload StudyStore::next_trial(const std::string& session_id) const {
  auto e = entry(session_id);
  std::lock_guard lock(e->mutex);
  const auto& s = e->session;
  require(!s.complete(), ErrorCode::session_complete, "session " + session_id + " is complete");
  const auto i = s.responses.size();
  return {s.session_id, s.trials[i].trial_id, static_cast<int>(i), static_cast<int>(s.trials.size()), s.trials[i].phase,
          s.width, s.height};
}

Feedback StudyStore::submit_response(const std::string& session_id, TrialResponse r) {
  auto e = entry(session_id);
  Feedback fb;
  {
    std::lock_guard lock(e->mutex);
    auto& s = e->session;
    const bool answered = std::any_of(s.responses.begin(), s.responses.end(),
                                      [&](const TrialResponse& x) { return x.trial_id == r.trial_id; });
    require(!answered, ErrorCode::conflict, "trial " + r.trial_id + " was already answered");
    require(!s.complete(), ErrorCode::session_complete, "session " + session_id + " is complete");
    const StudyTrial& t = s.trials[s.responses.size()];
    require(r.trial_id == t.trial_id, ErrorCode::conflict,
            "expected a response for trial " + t.trial_id + ", got " + r.trial_id);
    require(r.rating >= s.rating_min && r.rating <= s.rating_max, ErrorCode::validation,
            "rating must be in [" + std::to_string(s.rating_min) + ", " + std::to_string(s.rating_max) + "]");
    if (r.click)
      require(r.click->x >= 0 && r.click->x < s.width && r.click->y >= 0 && r.click->y < s.height,
              ErrorCode::validation, "click outside the image");
    require(std::isfinite(r.response_time_ms) && r.response_time_ms >= 0, ErrorCode::validation,
            "response time must be a non-negative number");
    r.received_at = utc_now();
    append_log(session_id, response_record(r).dump());
    s.responses.push_back(r);
    fb.trial_id = t.trial_id;
    fb.phase = t.phase;
    fb.complete = s.complete();
    if (t.phase == Phase::training) {
      fb.lesion_present = t.lesion_present;
      fb.lesion_location = t.lesion_location;
    }
  }
  if (fb.complete) write_index();
  return fb;
}

LrocDataset StudyStore::export_results(const std::string& session_id) const {
  auto e = entry(session_id);
  std::lock_guard lock(e->mutex);
  const auto& s = e->session;
  require(s.complete(), ErrorCode::precondition, "session " + session_id + " is not complete");
  LrocDataset out;
  for (std::size_t i = 0; i < s.trials.size(); ++i) {
    const auto& t = s.trials[i];
    if (t.phase != Phase::testing) continue;
    const auto& r = s.responses[i];
    out.push_back({t.case_id, t.lesion_present, t.lesion_location, static_cast<double>(r.rating), r.click});
  }
  return out;
}

std::string StudyStore::trial_png(const std::string& session_id, const std::string& trial_id) const {
  const StudySession s = session(session_id);
  const auto it = std::find_if(s.trials.begin(), s.trials.end(), [&](const StudyTrial& t) { return t.trial_id == trial_id; });
  require(it != s.trials.end(), ErrorCode::not_found, "unknown trial " + trial_id);
  const Condition& cond = condition(s.condition);
  const auto c = std::find_if(cond.cases.begin(), cond.cases.end(), [&](const Case& k) { return k.id == it->case_id; });
  require(c != cond.cases.end(), ErrorCode::not_found, "case of trial " + trial_id + " is missing");
  return encode_png_gray8(c->image.width(), c->image.height(), apply_window(c->image, s.window_low, s.window_high));
}

}  // namespace vsmo
