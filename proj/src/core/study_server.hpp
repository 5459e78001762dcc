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

// HTTP front end of a StudyStore. Routes and bodies are listed in
// docs/study-api.md.

#pragma once

#include <memory>
#include <string>

#include "core/study.hpp"

namespace vsmo {

class StudyServer {
 public:
  explicit StudyServer(StudyStore& store);
  ~StudyServer();
  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  /// Binds host:port; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(). bind() must have succeeded.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace vsmo
