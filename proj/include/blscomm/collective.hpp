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

#include <algorithm>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "blscomm/transport.hpp"

namespace blscomm {

enum class SafetyMode {
  /// The design as published: circular slots stamped with the source
  /// iteration and verified at completion. A slot-reuse overwrite is
  /// detected deterministically (never silent) but not prevented.
  faithful,
  /// Consumption-acked flow control: initiation of iteration i blocks
  /// until every peer acknowledged consuming iteration i - slot_count,
  /// so a slot is never overwritten before it was copied out anywhere.
  acked,
};

struct BlsConfig {
  /// Maximum permitted inter-rank iteration lag before blocking.
  int bound_k = 0;
  /// Number of circular receive slots (= tag space). 0 selects the
  /// default max(bound_k, 1).
  int slot_count = 0;
  SafetyMode safety = SafetyMode::faithful;
  /// Payload capacity per peer segment, excluding the 4-byte in-band
  /// length header.
  std::size_t per_peer_bytes = 0;

  int effective_slot_count() const { return slot_count > 0 ? slot_count : std::max(bound_k, 1); }
};

/// One completed exchange: a fresh copy of every peer's segment
/// (including this rank's own), ordered by source rank.
struct RecvResult {
  std::uint64_t iteration = 0;
  std::vector<std::vector<std::byte>> segments;
};

/// Bounded lag synchronous alltoallv over a registered circular window.
///
/// Initiation issues one tagged put per peer into slot
/// (iteration mod slot_count) and returns without peer synchronization;
/// completion blocks until comm_size-1 messages with the request's tag
/// arrived, verifies the per-source iteration stamps, and copies the
/// slot out. Requests complete strictly in FIFO (iteration) order.
///
/// Single-owner: initiate/wait/drain are called by the rank's worker
/// only. At most one context per communicator.
class BlsContext {
 public:
  BlsContext(Communicator& comm, const BlsConfig& config);
  ~BlsContext();
  BlsContext(const BlsContext&) = delete;
  BlsContext& operator=(const BlsContext&) = delete;

  /// Starts the next iteration's exchange. `send_segments[r]` goes to
  /// rank r; `recv_lengths[r]`, when non-empty, pins the byte count
  /// expected back from r (validated against the in-band declared
  /// length at completion). Returns the iteration id.
  std::uint64_t initiate(std::span<const std::span<const std::byte>> send_segments,
                         std::span<const std::uint32_t> recv_lengths = {},
                         std::optional<std::chrono::milliseconds> deadline = std::nullopt);

  /// Completes the oldest outstanding request and pops it.
  RecvResult wait(std::optional<std::chrono::milliseconds> deadline = std::nullopt);

  /// Completes all outstanding requests in iteration order.
  std::vector<RecvResult> drain(std::optional<std::chrono::milliseconds> deadline = std::nullopt);

  int outstanding() const { return static_cast<int>(fifo_.size()); }
  std::uint64_t next_iteration() const { return next_iteration_; }
  const BlsConfig& config() const { return config_; }
  int slot_count() const { return config_.effective_slot_count(); }

  /// iteration -> (tag == slot) mapping used by this context.
  int tag_of(std::uint64_t iteration) const {
    return static_cast<int>(iteration % static_cast<std::uint64_t>(slot_count()));
  }

 private:
  struct Pending {
    std::uint64_t iteration;
    int local_slot;
    std::vector<std::uint32_t> expected_lengths;
  };

  void gate_on_acks(std::uint64_t iteration,
                    std::optional<std::chrono::milliseconds> deadline);
  std::vector<std::uint64_t> read_ack_counts() const;

  Communicator& comm_;
  BlsConfig config_;
  WindowId data_window_;
  WindowId ack_window_;  // valid in acked mode only
  bool has_ack_window_ = false;
  std::uint64_t next_iteration_ = 0;
  std::uint64_t consumed_ = 0;  // local completed-request count
  std::deque<Pending> fifo_;
  std::vector<std::byte> scratch_;
};

/// Blocking linear alltoallv baseline: a single-slot exchange completed
/// with counted puts plus a trailing fence, so a round's slot cannot be
/// overwritten by the next round before every rank copied it out.
class RefA2AContext {
 public:
  RefA2AContext(Communicator& comm, std::size_t per_peer_bytes);

  RecvResult exchange(std::span<const std::span<const std::byte>> send_segments,
                      std::span<const std::uint32_t> recv_lengths = {},
                      std::optional<std::chrono::milliseconds> deadline = std::nullopt);

  std::uint64_t rounds() const { return round_; }

 private:
  Communicator& comm_;
  WindowId window_;
  std::size_t per_peer_bytes_;
  std::uint64_t round_ = 0;
  std::vector<std::byte> scratch_;
};

/// Extra buffer space implied by a bound of k:
/// k * (s*b*tables + s^2 + b) bytes for embedding size s (bytes), batch
/// size b and `tables` embedding tables.
std::uint64_t compute_bls_overhead(std::uint64_t k, std::uint64_t s, std::uint64_t b,
                                   std::uint64_t tables);

}  // namespace blscomm
