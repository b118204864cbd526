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

#pragma once

#include <cstdarg>

namespace blscomm {

enum class LogLevel : int { error = 0, info = 1, trace = 2 };

/// Current level, parsed once from BLS_LOG={error|info|trace}.
/// Unset or unrecognized values mean `error`.
LogLevel log_level();

void log_printf(LogLevel level, const char* fmt, ...) __attribute__((format(printf, 2, 3)));

#define BLSCOMM_LOG_ERROR(...) ::blscomm::log_printf(::blscomm::LogLevel::error, __VA_ARGS__)
#define BLSCOMM_LOG_INFO(...) ::blscomm::log_printf(::blscomm::LogLevel::info, __VA_ARGS__)
#define BLSCOMM_LOG_TRACE(...) ::blscomm::log_printf(::blscomm::LogLevel::trace, __VA_ARGS__)

}  // namespace blscomm
