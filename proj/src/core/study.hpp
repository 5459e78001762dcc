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

// Reader-study sessions.
//
// Layout of a study root:
//
//   <root>/conditions/<name>/   one dataset per condition (io.hpp layout)
//   <root>/sessions/<id>.ndjson append-only log: a "session" record with the
//                               full trial plan, then one "response" record
//                               per answered trial
//   <root>/sessions/index.json  summary of all sessions, rebuilt from the
//                               logs on start-up
//
// Each condition dataset is split in manifest order: the first
// training_trials / 2 lesion-present and lesion-absent cases form the
// training phase, the next testing_trials / 2 of each the testing phase.
// Every session shuffles each phase with its own seed; training comes first.
// Trials are identified by opaque ids ("t000", ...), never by case id.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "core/io.hpp"
#include "core/lroc.hpp"

namespace vsmo {

struct StudyConfig {
  std::string root = "study";
  std::string host = "127.0.0.1";
  int port = 8080;
  int training_trials = 36;
  int testing_trials = 72;
  int rating_min = 1;
  int rating_max = 6;
  std::uint64_t seed = 1;
  /// Display window in stored intensities; when unset, the range of the
  /// condition's images.
  std::optional<double> window_low;
  std::optional<double> window_high;

  void validate() const;
};

/// [study] section; VSMO_STUDY_ROOT, VSMO_STUDY_HOST and VSMO_STUDY_PORT
/// override the file.
StudyConfig parse_study_config(const std::string& text);
StudyConfig study_config_from_env(StudyConfig base);

enum class Phase { training, testing };
const char* to_string(Phase p) noexcept;

struct StudyTrial {
  std::string trial_id;
  std::string case_id;
  Phase phase = Phase::training;
  bool lesion_present = false;
  std::optional<Pixel> lesion_location;
};

struct TrialResponse {
  std::string trial_id;
  int rating = 0;
  std::optional<Pixel> click;  // none = "no lesion"
  double response_time_ms = 0.0;
  std::string received_at;  // UTC, ISO 8601
};

struct StudySession {
  std::string session_id;
  std::string observer_id;
  std::string condition;
  std::uint64_t seed = 0;
  int rating_min = 1;
  int rating_max = 6;
  double window_low = 0.0;
  double window_high = 1.0;
  int width = 0;
  int height = 0;
  std::vector<StudyTrial> trials;  // presentation order
  std::vector<TrialResponse> responses;

  [[nodiscard]] bool complete() const noexcept { return responses.size() == trials.size(); }
  [[nodiscard]] int training_count() const;
};

/// What the client may see of the current trial. Never holds truth.
struct TrialPayload {
  std::string session_id;
  std::string trial_id;
  int trial_index = 0;
  int trial_count = 0;
  Phase phase = Phase::training;
  int width = 0;
  int height = 0;
};

struct Feedback {
  std::string trial_id;
  Phase phase = Phase::training;
  bool complete = false;
  /// Set in the training phase only.
  std::optional<bool> lesion_present;
  std::optional<Pixel> lesion_location;
};

struct SessionSummary {
  std::string session_id;
  std::string observer_id;
  std::string condition;
  int answered = 0;
  int trials = 0;
  bool complete = false;
};

/// Thread-safe store over a study root. Operations on one session are
/// serialized; different sessions proceed independently.
class StudyStore {
 public:
  explicit StudyStore(StudyConfig config);

  [[nodiscard]] const StudyConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::vector<std::string> conditions() const;

  /// A seed of none derives one from the store seed and the session id.
  StudySession create_session(const std::string& observer_id, const std::string& condition,
                              std::optional<std::uint64_t> seed = std::nullopt);
  [[nodiscard]] StudySession session(const std::string& session_id) const;
  [[nodiscard]] std::vector<SessionSummary> sessions() const;

  /// Current trial; throws session_complete when nothing is left.
  [[nodiscard]] TrialPayload next_trial(const std::string& session_id) const;
  Feedback submit_response(const std::string& session_id, TrialResponse response);
  /// Testing-phase rows in results-CSV form; the session must be complete.
  [[nodiscard]] LrocDataset export_results(const std::string& session_id) const;

  /// PNG of a trial of the session, rendered with the session's window.
  [[nodiscard]] std::string trial_png(const std::string& session_id, const std::string& trial_id) const;

 private:
  struct Condition {
    std::vector<Case> cases;
    double low = 0.0;
    double high = 1.0;
  };
  struct Entry {
    mutable std::mutex mutex;
    StudySession session;
  };

  const Condition& condition(const std::string& name) const;
  std::shared_ptr<Entry> entry(const std::string& session_id) const;
  void append_log(const std::string& session_id, const std::string& line) const;
  void write_index() const;
  void replay(const std::filesystem::path& log);

  StudyConfig config_;
  std::filesystem::path root_;
  mutable std::mutex conditions_mutex_;
  mutable std::map<std::string, std::unique_ptr<Condition>> conditions_;
  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  mutable std::mutex index_mutex_;
  int next_session_ = 1;
};

/// Trial order of a session: training then testing, each shuffled by seed.
std::vector<StudyTrial> plan_trials(const std::vector<Case>& cases, int training_trials, int testing_trials,
                                    std::uint64_t seed);

}  // namespace vsmo
