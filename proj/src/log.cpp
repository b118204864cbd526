/*
 * Copyright (c) 2026, the blscomm authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "blscomm/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>

#include "blscomm/error.hpp"

namespace blscomm {

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("BLS_LOG");
    if (env == nullptr) return LogLevel::error;
    if (std::strcmp(env, "trace") == 0) return LogLevel::trace;
    if (std::strcmp(env, "info") == 0) return LogLevel::info;
    return LogLevel::error;
  }();
  return level;
}

void log_printf(LogLevel level, const char* fmt, ...) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lk(mu);
  const char* prefix = level == LogLevel::error ? "E" : (level == LogLevel::info ? "I" : "T");
  std::fprintf(stderr, "[blscomm %s] ", prefix);
  va_list args;
  va_start(args, fmt);
  std::vfprintf(stderr, fmt, args);
  va_end(args);
  std::fputc('\n', stderr);
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const HazardError*>(&e) != nullptr) return 3;
  if (dynamic_cast<const TimeoutError*>(&e) != nullptr) return 4;
  return 1;
}

}  // namespace blscomm
