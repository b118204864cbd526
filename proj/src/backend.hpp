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

#include "blscomm/frame.hpp"
#include "blscomm/transport.hpp"

namespace blscomm {

/// Delivery strategy behind a Communicator. `send` is called by the
/// rank's owner thread only; delivery invokes Communicator::apply_frame
/// from backend-owned threads.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual void send(int dest, Frame&& frame) = 0;
  virtual void start(Communicator* self) = 0;
  virtual void shutdown() = 0;
};

}  // namespace blscomm
