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

#include "core/study_server.hpp"

#include <httplib.h>

#include <cmath>
#include <nlohmann/json.hpp>

namespace vsmo {

using nlohmann::json;

namespace {

constexpr int kApiVersion = 1;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::precondition: return 412;
    case ErrorCode::session_complete: return 410;
    case ErrorCode::validation:
    case ErrorCode::invalid_input:
    case ErrorCode::invalid_parameter: return 422;
    case ErrorCode::parse: return 400;
    default: return 500;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, http_status(code),
            {{"version", kApiVersion}, {"error", {{"code", error_code_name(code)}, {"message", message}}}});
}

json session_view(const StudySession& s) {
  const int training = s.training_count();
  return {{"session_id", s.session_id},
          {"observer_id", s.observer_id},
          {"condition", s.condition},
          {"seed", s.seed},
          {"rating_min", s.rating_min},
          {"rating_max", s.rating_max},
          {"window_low", s.window_low},
          {"window_high", s.window_high},
          {"width", s.width},
          {"height", s.height},
          {"training_trials", training},
          {"testing_trials", static_cast<int>(s.trials.size()) - training},
          {"answered", s.responses.size()},
          {"complete", s.complete()}};
}

json parse_body(const httplib::Request& req) {
  json body;
  try {
    body = json::parse(req.body);
  } catch (const json::exception&) {
    fail(ErrorCode::validation, "request body is not JSON");
  }
  require(body.is_object(), ErrorCode::validation, "request body must be a JSON object");
  require(body.contains("version") && body["version"] == kApiVersion, ErrorCode::validation,
          "request body must carry \"version\": 1");
  return body;
}

template <class T>
T field(const json& body, const char* key) {
  require(body.contains(key), ErrorCode::validation, std::string("missing field ") + key);
  try {
    return body.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::validation, std::string("field ") + key + " has the wrong type");
  }
}

TrialResponse parse_response(const json& body) {
  TrialResponse r;
  r.trial_id = field<std::string>(body, "trial_id");
  const json& rating = body.contains("rating") ? body["rating"] : json();
  require(rating.is_number_integer(), ErrorCode::validation, "rating must be an integer");
  r.rating = rating.get<int>();
  if (body.contains("click") && !body["click"].is_null()) {
    const json& c = body["click"];
    require(c.is_object() && c.contains("x") && c.contains("y") && c["x"].is_number_integer() &&
                c["y"].is_number_integer(),
            ErrorCode::validation, "click must be {\"x\": int, \"y\": int} or null");
    r.click = Pixel{c["x"].get<int>(), c["y"].get<int>()};
  }
  const json& rt = body.contains("response_time_ms") ? body["response_time_ms"] : json();
  require(rt.is_number(), ErrorCode::validation, "response_time_ms must be a number");
  r.response_time_ms = rt.get<double>();
  return r;
}

}  // namespace

struct StudyServer::Impl {
  StudyStore& store;
  httplib::Server http;

  explicit Impl(StudyStore& s) : store(s) { routes(); }

  template <class F>
  auto guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, e.code(), e.what());
      } catch (const std::exception& e) {
        send_error(res, ErrorCode::io, e.what());
      }
    };
  }

  void routes() {
    http.Get("/healthz", guarded([](const httplib::Request&, httplib::Response& res) {
               send_json(res, 200, {{"version", kApiVersion}, {"status", "ok"}});
             }));

    http.Get("/api/v1/conditions", guarded([this](const httplib::Request&, httplib::Response& res) {
               send_json(res, 200, {{"version", kApiVersion}, {"conditions", store.conditions()}});
             }));

    http.Get("/api/v1/sessions", guarded([this](const httplib::Request&, httplib::Response& res) {
               json arr = json::array();
               for (const auto& s : store.sessions())
                 arr.push_back({{"session_id", s.session_id},
                                {"observer_id", s.observer_id},
                                {"condition", s.condition},
                                {"answered", s.answered},
                                {"trials", s.trials},
                                {"complete", s.complete}});
               send_json(res, 200, {{"version", kApiVersion}, {"sessions", arr}});
             }));

    http.Post("/api/v1/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                std::optional<std::uint64_t> seed;
                if (body.contains("seed") && !body["seed"].is_null()) seed = field<std::uint64_t>(body, "seed");
                const auto s = store.create_session(field<std::string>(body, "observer_id"),
                                                    field<std::string>(body, "condition"), seed);
                send_json(res, 201, {{"version", kApiVersion}, {"session", session_view(s)}});
              }));

    http.Get(R"(/api/v1/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, {{"version", kApiVersion}, {"session", session_view(store.session(req.matches[1]))}});
             }));

    http.Get(R"(/api/v1/sessions/([^/]+)/next)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const auto t = store.next_trial(req.matches[1]);
               send_json(res, 200,
                         {{"version", kApiVersion},
                          {"trial",
                           {{"session_id", t.session_id},
                            {"trial_id", t.trial_id},
                            {"trial_index", t.trial_index},
                            {"trial_count", t.trial_count},
                            {"phase", to_string(t.phase)},
                            {"width", t.width},
                            {"height", t.height},
                            {"image_url", "/api/v1/sessions/" + t.session_id + "/trials/" + t.trial_id + "/image"}}}});
             }));

    http.Get(R"(/api/v1/sessions/([^/]+)/trials/([^/]+)/image)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               res.status = 200;
               res.set_content(store.trial_png(req.matches[1], req.matches[2]), "image/png");
             }));

    http.Post(R"(/api/v1/sessions/([^/]+)/responses)",
              guarded([this](const httplib::Request& req, httplib::Response& res) {
                const auto fb = store.submit_response(req.matches[1], parse_response(parse_body(req)));
                json out{{"trial_id", fb.trial_id}, {"phase", to_string(fb.phase)}, {"complete", fb.complete}};
                if (fb.lesion_present) {
                  out["lesion_present"] = *fb.lesion_present;
                  out["lesion_location"] =
                      fb.lesion_location ? json{{"x", fb.lesion_location->x}, {"y", fb.lesion_location->y}} : json();
                }
                send_json(res, 200, {{"version", kApiVersion}, {"feedback", out}});
              }));

    http.Get(R"(/api/v1/sessions/([^/]+)/export)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               res.status = 200;
               res.set_content(write_results_csv(store.export_results(req.matches[1])), "text/csv");
             }));
  }
};

StudyServer::StudyServer(StudyStore& store) : impl_(std::make_unique<Impl>(store)) {}
StudyServer::~StudyServer() = default;

int StudyServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->http.bind_to_any_port(host);
    require(bound > 0, ErrorCode::io, "cannot bind " + host);
    return bound;
  }
  require(impl_->http.bind_to_port(host, port), ErrorCode::io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void StudyServer::run() { impl_->http.listen_after_bind(); }

void StudyServer::stop() { impl_->http.stop(); }

}  // namespace vsmo
