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

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "blscomm/frame.hpp"

namespace blscomm {

using Tag = std::uint16_t;

/// Stamp value of a slot segment that was never written.
inline constexpr std::uint64_t kNoStamp = ~0ULL;

/// One one-sided, tagged, non-blocking write into a peer's registered
/// window. `offset_bytes` is relative to the source's own segment of the
/// target slot; a slot holds comm_size segments of per_peer_bytes each.
struct PutDescriptor {
  int dest = 0;
  int slot = 0;  // global slot index on this communicator
  std::size_t offset_bytes = 0;
  std::size_t length_bytes = 0;  // must be positive
  Tag tag = 0;
  std::uint64_t iteration = 0;  // debug stamp, monotone per (source, dest, window)
  std::span<const std::byte> payload;
};

struct WindowId {
  int index = -1;
};

struct FenceTotals {
  std::int64_t bytes_put = 0;
  std::int64_t bytes_applied = 0;
};

/// Seeded delivery randomization for the in-process backend: the
/// per-destination delivery worker picks a random non-empty source
/// queue and optionally sleeps before applying, so message interleaving
/// across (source, dest) pairs is adversarial while order within a pair
/// is preserved.
struct ChaosOptions {
  bool enabled = false;
  std::uint64_t seed = 0;
  std::chrono::microseconds max_delay{0};
};

struct InProcessOptions {
  ChaosOptions chaos;
};

struct TcpOptions {
  /// Setup/registration deadline. Unset means BLS_COMM_TIMEOUT_MS if
  /// present, else 30 s.
  std::optional<std::chrono::milliseconds> setup_timeout;
  /// Optional pre-bound listening socket for this rank (used by tests
  /// that allocate ephemeral ports up front). Ownership transfers.
  int listen_fd = -1;
};

/// Reads BLS_COMM_TIMEOUT_MS, falling back to 30000.
std::chrono::milliseconds setup_timeout_from_env();

class Backend;

/// One rank's handle onto the communicator. Single logical owner:
/// `put`, `await_count`, `fence` and window registration are called
/// only by the owning worker. Delivery is asynchronous underneath; the
/// implementation guarantees that once a tag count is observable, the
/// payloads of all counted messages are fully visible in their slots.
class Communicator {
 public:
  Communicator(const Communicator&) = delete;
  Communicator& operator=(const Communicator&) = delete;
  ~Communicator();

  int rank() const { return rank_; }
  int size() const { return size_; }

  /// Collective. Allocates `slot_count` receive slots, each holding
  /// comm_size segments of `per_peer_bytes`, and exchanges an
  /// argument hash with all peers so mismatched or misordered
  /// registrations fail loudly. Slots and tags share one global index
  /// space per communicator; the returned window owns
  /// [base, base+slot_count). All ranks must register their windows in
  /// the same order. Windows live until the communicator is destroyed.
  WindowId register_window(int slot_count, std::size_t per_peer_bytes);

  int window_base(WindowId w) const;
  int window_slot_count(WindowId w) const;
  std::size_t window_per_peer_bytes(WindowId w) const;
  int total_slots() const;

  /// Non-blocking one-sided write. Returns once the payload has been
  /// snapshotted; delivery happens asynchronously. Self-puts are
  /// synchronous local copies and do not increment the tag counter.
  void put(const PutDescriptor& desc);

  /// Blocks until counts[tag] >= n, then atomically subtracts n so the
  /// tag is reusable by a later iteration. n == 0 returns immediately.
  void await_count(Tag tag, std::int64_t n,
                   std::optional<std::chrono::milliseconds> deadline = std::nullopt);

  /// Local-only counter query (no consumption).
  std::int64_t count_snapshot(Tag tag) const;

  /// Collective barrier over control frames. Because control frames
  /// travel the same ordered (source, dest) channels as data, a fence
  /// also flushes every put issued before the sender entered it.
  void fence();

  /// Byte counters summed over all ranks as carried by the latest
  /// completed fence (each rank's snapshot taken at fence entry).
  FenceTotals last_fence_totals() const;

  /// Local counters (bytes issued by this rank / applied at this rank).
  FenceTotals local_totals() const;

  /// Runs `fn` under the slot's lock with views of the slot bytes
  /// (comm_size segments) and the per-source iteration stamps. Used by
  /// the collective layer for hazard checks and copy-out; the lock
  /// makes the copy atomic with respect to concurrent deliveries.
  void with_slot(WindowId w, int local_slot,
                 const std::function<void(std::span<const std::byte>,
                                          std::span<const std::uint64_t>)>& fn);

  /// Poisons the communicator: all blocked and future calls throw
  /// TransportError with this reason.
  void fail(const std::string& reason);

  bool failed() const;

  // Collective-layer bookkeeping: at most one BLS context per
  // communicator at a time.
  bool try_acquire_bls_context();
  void release_bls_context();

 private:
  friend class InProcessFabric;
  friend class TcpBackend;
  friend std::vector<std::unique_ptr<Communicator>> create_in_process_comm(int,
                                                                           const InProcessOptions&);
  friend std::unique_ptr<Communicator> create_tcp_comm(int, int,
                                                       const std::vector<std::string>&,
                                                       const TcpOptions&);

  Communicator(int rank, int size);

  struct Slot {
    std::mutex mu;
    std::vector<std::byte> bytes;          // comm_size * per_peer_bytes
    std::vector<std::uint64_t> stamps;     // per source, kNoStamp when unwritten
  };

  struct Window {
    int base = 0;
    int slot_count = 0;
    std::size_t per_peer_bytes = 0;
    std::vector<std::unique_ptr<Slot>> slots;
  };

  struct FenceState {
    int arrivals = 0;
    std::int64_t peer_put = 0;
    std::int64_t peer_applied = 0;
  };

  // Delivery entry point used by backends (worker/reader threads).
  void apply_frame(const Frame& f);
  void apply_data(const Frame& f, bool count_it);
  void apply_control(const Frame& f);

  const Window& window_for_global_slot(int slot, int& local_slot) const;
  void ensure_live() const;
  void validate_put(const PutDescriptor& desc) const;

  int rank_;
  int size_;
  std::unique_ptr<Backend> backend_;
  std::chrono::milliseconds setup_timeout_;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<std::int64_t> counts_;  // indexed by global tag
  std::vector<Window> windows_;
  int total_slots_ = 0;
  bool failed_ = false;
  std::string fail_reason_;
  bool bls_context_active_ = false;

  std::uint64_t fence_generation_ = 0;
  std::map<std::uint64_t, FenceState> fences_;
  FenceTotals last_fence_totals_{};

  // Registration rendezvous: window index -> (source -> args hash).
  std::map<int, std::map<int, std::uint64_t>> reg_arrivals_;

  std::int64_t bytes_put_ = 0;      // guarded by mu_
  std::int64_t bytes_applied_ = 0;  // guarded by mu_

  // Per (source, window) last applied stamp, for the order self-check.
  std::vector<std::vector<std::uint64_t>> last_stamp_;  // [source][window]
};

/// Creates `comm_size` connected rank handles living in one process,
/// sharing per-destination delivery workers. Handles may be moved to
/// worker threads; destroy them only after all workers joined.
std::vector<std::unique_ptr<Communicator>> create_in_process_comm(
    int comm_size, const InProcessOptions& options = {});

/// Creates this rank's handle of a TCP communicator. `endpoints` holds
/// comm_size "host:port" strings; every rank must call with the same
/// list. Blocks until the full mesh is connected or the setup timeout
/// expires.
std::unique_ptr<Communicator> create_tcp_comm(int comm_size, int rank,
                                              const std::vector<std::string>& endpoints,
                                              const TcpOptions& options = {});

/// Pre-binds comm_size loopback listeners on ephemeral ports and
/// returns their endpoints plus the owned fds (index-aligned). Lets
/// in-process tests run the TCP backend without fixed ports.
std::pair<std::vector<std::string>, std::vector<int>> reserve_loopback_endpoints(int comm_size);

}  // namespace blscomm
