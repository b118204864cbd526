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

#include <functional>
#include <memory>
#include <span>

#include "blscomm/transport.hpp"

namespace blscomm {

/// Runs `body(comm)` on one worker thread per rank and joins them.
/// When a worker throws, every communicator is poisoned so blocked
/// peers unwind, and the chronologically first exception is rethrown.
void run_on_ranks(std::span<const std::unique_ptr<Communicator>> comms,
                  const std::function<void(Communicator&)>& body);

/// Creates an in-process communicator, runs `body` per rank, tears
/// down.
void run_in_process(int comm_size, const std::function<void(Communicator&)>& body,
                    const InProcessOptions& options = {});

}  // namespace blscomm
