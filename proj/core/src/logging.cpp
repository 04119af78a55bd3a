// Copyright 2026 The obsgen Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "obsgen/logging.hpp"

#include <iostream>
#include <utility>

namespace obsgen {
namespace {

bool g_verbose = false;

void default_sink(LogLevel level, const std::string& message) {
  if (level == LogLevel::kWarning) {
    std::cerr << "warning: " << message << '\n';
  } else if (g_verbose) {
    std::cerr << message << '\n';
  }
}

LogSink& sink() {
  static LogSink s = default_sink;
  return s;
}

}  // namespace

LogSink set_log_sink(LogSink s) {
  LogSink previous = std::move(sink());
  sink() = s ? std::move(s) : LogSink(default_sink);
  return previous;
}

void set_verbose(bool verbose) { g_verbose = verbose; }

void log_info(const std::string& message) { sink()(LogLevel::kInfo, message); }

void log_warning(const std::string& message) {
  sink()(LogLevel::kWarning, message);
}

}  // namespace obsgen
