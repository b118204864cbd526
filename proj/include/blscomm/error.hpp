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

#include <cstdint>
#include <stdexcept>
#include <string>

namespace blscomm {

/// Base class for all blscomm errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or flag combination. CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Failure while establishing a communicator or registering windows.
class SetupError : public Error {
 public:
  using Error::Error;
};

/// The transport failed (peer disconnect, wire corruption). The
/// communicator is poisoned; all subsequent calls rethrow.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// A blocking wait exceeded its deadline. Carries the tag and the
/// observed/expected counts for deadlock diagnosis. CLI exit code 4.
class TimeoutError : public Error {
 public:
  TimeoutError(std::string what, int tag, std::int64_t observed, std::int64_t expected)
      : Error(std::move(what)), tag(tag), observed(observed), expected(expected) {}

  int tag;
  std::int64_t observed;
  std::int64_t expected;
};

/// A receive slot was overwritten before its contents were consumed:
/// the iteration stamp found in the slot does not match the request
/// being completed. Names the offending source. CLI exit code 3.
class HazardError : public Error {
 public:
  HazardError(std::string what, int source, std::uint64_t expected_iteration,
              std::uint64_t observed_iteration)
      : Error(std::move(what)),
        source(source),
        expected_iteration(expected_iteration),
        observed_iteration(observed_iteration) {}

  int source;
  std::uint64_t expected_iteration;
  std::uint64_t observed_iteration;
};

/// Caller misused a protocol contract (e.g. initiating with all slots
/// occupied, or waiting with an empty request FIFO).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Maps an exception to the CLI exit code convention:
/// 0 success, 2 config error, 3 protocol-safety (hazard), 4 timeout,
/// 1 anything else.
int exit_code_for(const std::exception& e);

}  // namespace blscomm
