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

#include "blscomm/transport.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <thread>

#include "backend.hpp"
#include "blscomm/error.hpp"
#include "blscomm/log.hpp"
#include "blscomm/rng.hpp"

namespace blscomm {

std::chrono::milliseconds setup_timeout_from_env() {
  const char* env = std::getenv("BLS_COMM_TIMEOUT_MS");
  if (env != nullptr) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return std::chrono::milliseconds(v);
  }
  return std::chrono::milliseconds(30000);
}

// ---------------------------------------------------------------------------
// Communicator core
// ---------------------------------------------------------------------------

Communicator::Communicator(int rank, int size)
    : rank_(rank), size_(size), setup_timeout_(setup_timeout_from_env()) {
  last_stamp_.resize(static_cast<std::size_t>(size));
}

Communicator::~Communicator() {
  if (backend_) backend_->shutdown();
}

void Communicator::ensure_live() const {
  std::lock_guard<std::mutex> lk(mu_);
  if (failed_) throw TransportError(fail_reason_);
}

void Communicator::fail(const std::string& reason) {
  {
    std::lock_guard<std::mutex> lk(mu_);
    if (!failed_) {
      failed_ = true;
      fail_reason_ = "communicator failed: " + reason;
    }
  }
  cv_.notify_all();
}

bool Communicator::failed() const {
  std::lock_guard<std::mutex> lk(mu_);
  return failed_;
}

bool Communicator::try_acquire_bls_context() {
  std::lock_guard<std::mutex> lk(mu_);
  if (bls_context_active_) return false;
  bls_context_active_ = true;
  return true;
}

void Communicator::release_bls_context() {
  std::lock_guard<std::mutex> lk(mu_);
  bls_context_active_ = false;
}

WindowId Communicator::register_window(int slot_count, std::size_t per_peer_bytes) {
  ensure_live();
  if (slot_count < 1) throw ConfigError("register_window: slot_count must be >= 1");
  if (per_peer_bytes < 1) throw ConfigError("register_window: per_peer_bytes must be >= 1");

  int windex = 0;
  {
    std::lock_guard<std::mutex> lk(mu_);
    if (total_slots_ + slot_count >= kControlSlot) {
      throw ConfigError("register_window: slot space exhausted");
    }
    windex = static_cast<int>(windows_.size());
    Window w;
    w.base = total_slots_;
    w.slot_count = slot_count;
    w.per_peer_bytes = per_peer_bytes;
    for (int s = 0; s < slot_count; ++s) {
      auto slot = std::make_unique<Slot>();
      slot->bytes.resize(static_cast<std::size_t>(size_) * per_peer_bytes);
      slot->stamps.assign(static_cast<std::size_t>(size_), kNoStamp);
      w.slots.push_back(std::move(slot));
    }
    windows_.push_back(std::move(w));
    total_slots_ += slot_count;
    counts_.resize(static_cast<std::size_t>(total_slots_), 0);
    for (auto& per_window : last_stamp_) per_window.push_back(kNoStamp);
  }

  const std::uint64_t hash = registration_hash(static_cast<std::uint32_t>(windex),
                                               static_cast<std::uint32_t>(slot_count),
                                               per_peer_bytes);
  RegisterBody body;
  body.window_index = static_cast<std::uint32_t>(windex);
  body.slot_count = static_cast<std::uint32_t>(slot_count);
  body.per_peer_bytes = per_peer_bytes;
  body.args_hash = hash;
  for (int p = 0; p < size_; ++p) {
    if (p == rank_) continue;
    Frame f;
    f.header.slot = kControlSlot;
    f.header.tag = static_cast<Tag>(ControlKind::register_window);
    f.header.source = static_cast<std::uint16_t>(rank_);
    f.payload = encode_register(body);
    f.header.length = static_cast<std::uint32_t>(f.payload.size());
    backend_->send(p, std::move(f));
  }

  std::unique_lock<std::mutex> lk(mu_);
  const bool ok = cv_.wait_for(lk, setup_timeout_, [&] {
    return failed_ || reg_arrivals_[windex].size() == static_cast<std::size_t>(size_ - 1);
  });
  if (failed_) throw TransportError(fail_reason_);
  if (!ok) {
    throw SetupError("register_window: timed out waiting for peer registrations");
  }
  for (const auto& [src, h] : reg_arrivals_[windex]) {
    if (h != hash) {
      throw SetupError("register_window: mismatched arguments detected against rank " +
                       std::to_string(src));
    }
  }
  reg_arrivals_.erase(windex);
  return WindowId{windex};
}

int Communicator::window_base(WindowId w) const {
  std::lock_guard<std::mutex> lk(mu_);
  return windows_.at(static_cast<std::size_t>(w.index)).base;
}

int Communicator::window_slot_count(WindowId w) const {
  std::lock_guard<std::mutex> lk(mu_);
  return windows_.at(static_cast<std::size_t>(w.index)).slot_count;
}

std::size_t Communicator::window_per_peer_bytes(WindowId w) const {
  std::lock_guard<std::mutex> lk(mu_);
  return windows_.at(static_cast<std::size_t>(w.index)).per_peer_bytes;
}

int Communicator::total_slots() const {
  std::lock_guard<std::mutex> lk(mu_);
  return total_slots_;
}

const Communicator::Window& Communicator::window_for_global_slot(int slot,
                                                                 int& local_slot) const {
  for (const auto& w : windows_) {
    if (slot >= w.base && slot < w.base + w.slot_count) {
      local_slot = slot - w.base;
      return w;
    }
  }
  throw TransportError("put targets unregistered slot " + std::to_string(slot));
}

void Communicator::validate_put(const PutDescriptor& desc) const {
  std::lock_guard<std::mutex> lk(mu_);
  if (desc.dest < 0 || desc.dest >= size_) {
    throw ProtocolError("put: destination rank out of range");
  }
  if (desc.length_bytes == 0) throw ProtocolError("put: length must be positive");
  if (desc.payload.size() != desc.length_bytes) {
    throw ProtocolError("put: payload size does not match length_bytes");
  }
  if (desc.slot < 0 || desc.slot >= total_slots_) {
    throw ProtocolError("put: slot out of range");
  }
  if (desc.tag >= total_slots_) throw ProtocolError("put: tag out of range");
  int local = 0;
  const Window& w = window_for_global_slot(desc.slot, local);
  if (desc.offset_bytes + desc.length_bytes > w.per_peer_bytes) {
    throw ProtocolError("put: offset+length exceeds segment capacity");
  }
}

void Communicator::put(const PutDescriptor& desc) {
  ensure_live();
  validate_put(desc);
  {
    std::lock_guard<std::mutex> lk(mu_);
    bytes_put_ += static_cast<std::int64_t>(desc.length_bytes);
  }
  Frame f;
  f.header.tag = desc.tag;
  f.header.slot = static_cast<std::uint16_t>(desc.slot);
  f.header.source = static_cast<std::uint16_t>(rank_);
  f.header.iteration = desc.iteration;
  f.header.offset = static_cast<std::uint32_t>(desc.offset_bytes);
  f.header.length = static_cast<std::uint32_t>(desc.length_bytes);
  f.payload.assign(desc.payload.begin(), desc.payload.end());
  if (desc.dest == rank_) {
    apply_data(f, /*count_it=*/false);
  } else {
    backend_->send(desc.dest, std::move(f));
  }
}

void Communicator::apply_frame(const Frame& f) {
  if (f.header.is_control()) {
    apply_control(f);
  } else {
    apply_data(f, /*count_it=*/true);
  }
}

void Communicator::apply_data(const Frame& f, bool count_it) {
  Slot* slot = nullptr;
  std::size_t per_peer = 0;
  const int src = f.header.source;
  {
    std::lock_guard<std::mutex> lk(mu_);
    if (failed_) return;
    if (src < 0 || src >= size_) {
      throw TransportError("data frame with invalid source rank");
    }
    int local = 0;
    const Window& w = window_for_global_slot(f.header.slot, local);
    if (f.header.offset + f.header.length > w.per_peer_bytes ||
        f.payload.size() != f.header.length) {
      throw TransportError("data frame exceeds segment capacity");
    }
    const int windex = static_cast<int>(&w - windows_.data());
    std::uint64_t& last = last_stamp_[static_cast<std::size_t>(src)]
                                     [static_cast<std::size_t>(windex)];
    if (last != kNoStamp && f.header.iteration < last) {
      throw TransportError("iteration stamps reordered within a (source, dest) pair");
    }
    last = f.header.iteration;
    slot = w.slots[static_cast<std::size_t>(local)].get();
    per_peer = w.per_peer_bytes;
  }
  {
    std::lock_guard<std::mutex> lk(slot->mu);
    slot->stamps[static_cast<std::size_t>(src)] = f.header.iteration;
    std::memcpy(slot->bytes.data() + static_cast<std::size_t>(src) * per_peer + f.header.offset,
                f.payload.data(), f.payload.size());
  }
  {
    std::lock_guard<std::mutex> lk(mu_);
    bytes_applied_ += static_cast<std::int64_t>(f.header.length);
    if (count_it) counts_[f.header.tag] += 1;
  }
  cv_.notify_all();
}

void Communicator::apply_control(const Frame& f) {
  switch (static_cast<ControlKind>(f.header.tag)) {
    case ControlKind::register_window: {
      const RegisterBody body = decode_register(f.payload);
      std::lock_guard<std::mutex> lk(mu_);
      reg_arrivals_[static_cast<int>(body.window_index)][f.header.source] = body.args_hash;
      cv_.notify_all();
      break;
    }
    case ControlKind::fence: {
      const FenceBody body = decode_fence(f.payload);
      std::lock_guard<std::mutex> lk(mu_);
      FenceState& st = fences_[body.generation];
      st.arrivals += 1;
      st.peer_put += body.bytes_put;
      st.peer_applied += body.bytes_applied;
      cv_.notify_all();
      break;
    }
    default:
      throw TransportError("unexpected control frame kind");
  }
}

void Communicator::await_count(Tag tag, std::int64_t n,
                               std::optional<std::chrono::milliseconds> deadline) {
  if (n < 0) throw ProtocolError("await_count: negative count");
  std::unique_lock<std::mutex> lk(mu_);
  if (failed_) throw TransportError(fail_reason_);
  if (tag >= counts_.size()) throw ProtocolError("await_count: tag out of range");
  if (n == 0) return;
  auto ready = [&] { return failed_ || counts_[tag] >= n; };
  if (deadline.has_value()) {
    if (!cv_.wait_for(lk, *deadline, ready)) {
      throw TimeoutError("await_count: deadline exceeded for tag " + std::to_string(tag) +
                             " (observed " + std::to_string(counts_[tag]) + ", expected " +
                             std::to_string(n) + ")",
                         tag, counts_[tag], n);
    }
  } else {
    cv_.wait(lk, ready);
  }
  if (failed_) throw TransportError(fail_reason_);
  counts_[tag] -= n;
}

std::int64_t Communicator::count_snapshot(Tag tag) const {
  std::lock_guard<std::mutex> lk(mu_);
  if (tag >= counts_.size()) throw ProtocolError("count_snapshot: tag out of range");
  return counts_[tag];
}

void Communicator::fence() {
  ensure_live();
  std::uint64_t gen = 0;
  FenceBody body;
  {
    std::lock_guard<std::mutex> lk(mu_);
    gen = ++fence_generation_;
    body.generation = gen;
    body.bytes_put = bytes_put_;
    body.bytes_applied = bytes_applied_;
  }
  for (int p = 0; p < size_; ++p) {
    if (p == rank_) continue;
    Frame f;
    f.header.slot = kControlSlot;
    f.header.tag = static_cast<Tag>(ControlKind::fence);
    f.header.source = static_cast<std::uint16_t>(rank_);
    f.header.iteration = gen;
    f.payload = encode_fence(body);
    f.header.length = static_cast<std::uint32_t>(f.payload.size());
    backend_->send(p, std::move(f));
  }
  std::unique_lock<std::mutex> lk(mu_);
  cv_.wait(lk, [&] { return failed_ || fences_[gen].arrivals == size_ - 1; });
  if (failed_) throw TransportError(fail_reason_);
  const FenceState& st = fences_[gen];
  last_fence_totals_.bytes_put = body.bytes_put + st.peer_put;
  last_fence_totals_.bytes_applied = body.bytes_applied + st.peer_applied;
  fences_.erase(gen);
}

FenceTotals Communicator::last_fence_totals() const {
  std::lock_guard<std::mutex> lk(mu_);
  return last_fence_totals_;
}

FenceTotals Communicator::local_totals() const {
  std::lock_guard<std::mutex> lk(mu_);
  return FenceTotals{bytes_put_, bytes_applied_};
}

void Communicator::with_slot(WindowId w, int local_slot,
                             const std::function<void(std::span<const std::byte>,
                                                      std::span<const std::uint64_t>)>& fn) {
  Slot* slot = nullptr;
  {
    std::lock_guard<std::mutex> lk(mu_);
    if (failed_) throw TransportError(fail_reason_);
    const Window& win = windows_.at(static_cast<std::size_t>(w.index));
    slot = win.slots.at(static_cast<std::size_t>(local_slot)).get();
  }
  std::lock_guard<std::mutex> lk(slot->mu);
  fn(std::span<const std::byte>(slot->bytes), std::span<const std::uint64_t>(slot->stamps));
}

// ---------------------------------------------------------------------------
// In-process backend
// ---------------------------------------------------------------------------

namespace {

class InProcessFabric {
 public:
  InProcessFabric(int n, const InProcessOptions& opt) : n_(n), opt_(opt), comms_(n, nullptr) {
    lanes_.reserve(static_cast<std::size_t>(n));
    for (int d = 0; d < n; ++d) lanes_.push_back(std::make_unique<Lane>(n));
  }

  ~InProcessFabric() {
    for (int d = 0; d < n_; ++d) stop_lane(d);
  }

  void attach(int rank, Communicator* c) {
    std::lock_guard<std::mutex> lk(comms_mu_);
    comms_[static_cast<std::size_t>(rank)] = c;
  }

  void start_workers() {
    for (int d = 0; d < n_; ++d) {
      Lane& lane = *lanes_[static_cast<std::size_t>(d)];
      lane.worker = std::thread([this, d] { worker_loop(d); });
    }
  }

  void detach(int rank) {
    stop_lane(rank);
    std::lock_guard<std::mutex> lk(comms_mu_);
    comms_[static_cast<std::size_t>(rank)] = nullptr;
  }

  void send(int source, int dest, Frame&& f) {
    Lane& lane = *lanes_[static_cast<std::size_t>(dest)];
    {
      std::lock_guard<std::mutex> lk(lane.mu);
      if (lane.stopped) return;  // fail-stop: peer already torn down
      lane.per_source[static_cast<std::size_t>(source)].emplace_back(lane.next_seq++,
                                                                     std::move(f));
    }
    lane.cv.notify_one();
  }

  void fail_all(const std::string& reason) {
    std::lock_guard<std::mutex> lk(comms_mu_);
    for (Communicator* c : comms_) {
      if (c != nullptr) c->fail(reason);
    }
  }

 private:
  struct Lane {
    explicit Lane(int n) : per_source(static_cast<std::size_t>(n)) {}
    std::mutex mu;
    std::condition_variable cv;
    std::vector<std::deque<std::pair<std::uint64_t, Frame>>> per_source;
    std::uint64_t next_seq = 0;
    bool stop = false;
    bool stopped = false;
    std::thread worker;
  };

  bool any_nonempty(const Lane& lane) const {
    return std::any_of(lane.per_source.begin(), lane.per_source.end(),
                       [](const auto& q) { return !q.empty(); });
  }

  void worker_loop(int dest) {
    Lane& lane = *lanes_[static_cast<std::size_t>(dest)];
    SplitMix64 rng(key_mix({opt_.chaos.seed, kRngChaos, static_cast<std::uint64_t>(dest)}));
    for (;;) {
      Frame frame;
      {
        std::unique_lock<std::mutex> lk(lane.mu);
        lane.cv.wait(lk, [&] { return lane.stop || any_nonempty(lane); });
        if (!any_nonempty(lane)) return;  // stop requested and drained
        int pick = -1;
        if (opt_.chaos.enabled) {
          // Random choice across non-empty source queues; per-pair order
          // is preserved because each queue is FIFO.
          int nonempty = 0;
          for (int s = 0; s < n_; ++s) {
            if (!lane.per_source[static_cast<std::size_t>(s)].empty()) ++nonempty;
          }
          int target = static_cast<int>(rng.next_below(static_cast<std::uint32_t>(nonempty)));
          for (int s = 0; s < n_; ++s) {
            if (lane.per_source[static_cast<std::size_t>(s)].empty()) continue;
            if (target-- == 0) {
              pick = s;
              break;
            }
          }
        } else {
          // Global arrival order.
          std::uint64_t best = ~0ULL;
          for (int s = 0; s < n_; ++s) {
            const auto& q = lane.per_source[static_cast<std::size_t>(s)];
            if (!q.empty() && q.front().first < best) {
              best = q.front().first;
              pick = s;
            }
          }
        }
        auto& q = lane.per_source[static_cast<std::size_t>(pick)];
        frame = std::move(q.front().second);
        q.pop_front();
      }
      if (opt_.chaos.enabled && opt_.chaos.max_delay.count() > 0) {
        const auto us = rng.next_below(
            static_cast<std::uint32_t>(opt_.chaos.max_delay.count() + 1));
        if (us > 0) std::this_thread::sleep_for(std::chrono::microseconds(us));
      }
      Communicator* c = nullptr;
      {
        std::lock_guard<std::mutex> lk(comms_mu_);
        c = comms_[static_cast<std::size_t>(dest)];
      }
      if (c == nullptr) continue;  // destination torn down; drop
      try {
        c->apply_frame(frame);
      } catch (const std::exception& e) {
        BLSCOMM_LOG_ERROR("in-process delivery to rank %d failed: %s", dest, e.what());
        fail_all(e.what());
      }
    }
  }

  void stop_lane(int rank) {
    Lane& lane = *lanes_[static_cast<std::size_t>(rank)];
    {
      std::lock_guard<std::mutex> lk(lane.mu);
      if (lane.stopped) return;
      lane.stop = true;
      lane.stopped = true;
    }
    lane.cv.notify_all();
    if (lane.worker.joinable()) lane.worker.join();
  }

  int n_;
  InProcessOptions opt_;
  std::vector<std::unique_ptr<Lane>> lanes_;
  std::mutex comms_mu_;
  std::vector<Communicator*> comms_;
};

class InProcessBackend : public Backend {
 public:
  InProcessBackend(std::shared_ptr<InProcessFabric> fabric, int rank)
      : fabric_(std::move(fabric)), rank_(rank) {}

  void send(int dest, Frame&& frame) override { fabric_->send(rank_, dest, std::move(frame)); }

  void start(Communicator* self) override { fabric_->attach(rank_, self); }

  void shutdown() override { fabric_->detach(rank_); }

 private:
  std::shared_ptr<InProcessFabric> fabric_;
  int rank_;
};

}  // namespace

std::vector<std::unique_ptr<Communicator>> create_in_process_comm(
    int comm_size, const InProcessOptions& options) {
  if (comm_size < 1) throw ConfigError("create_in_process_comm: comm_size must be >= 1");
  auto fabric = std::make_shared<InProcessFabric>(comm_size, options);
  std::vector<std::unique_ptr<Communicator>> comms;
  comms.reserve(static_cast<std::size_t>(comm_size));
  for (int r = 0; r < comm_size; ++r) {
    std::unique_ptr<Communicator> c(new Communicator(r, comm_size));
    c->backend_ = std::make_unique<InProcessBackend>(fabric, r);
    c->backend_->start(c.get());
    comms.push_back(std::move(c));
  }
  fabric->start_workers();
  return comms;
}

// ---------------------------------------------------------------------------
// Rank-thread harness
// ---------------------------------------------------------------------------

void run_on_ranks(std::span<const std::unique_ptr<Communicator>> comms,
                  const std::function<void(Communicator&)>& body) {
  const std::size_t n = comms.size();
  std::vector<std::exception_ptr> errors(n);
  std::vector<int> order(n, -1);
  std::atomic<int> sequence{0};
  std::vector<std::thread> threads;
  threads.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    threads.emplace_back([&, r] {
      try {
        body(*comms[r]);
      } catch (...) {
        errors[r] = std::current_exception();
        order[r] = sequence.fetch_add(1);
        for (const auto& c : comms) {
          c->fail("rank " + std::to_string(r) + " aborted");
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  int first = -1;
  for (std::size_t r = 0; r < n; ++r) {
    if (errors[r] && (first < 0 || order[r] < order[static_cast<std::size_t>(first)])) {
      first = static_cast<int>(r);
    }
  }
  if (first >= 0) std::rethrow_exception(errors[static_cast<std::size_t>(first)]);
}

void run_in_process(int comm_size, const std::function<void(Communicator&)>& body,
                    const InProcessOptions& options) {
  auto comms = create_in_process_comm(comm_size, options);
  run_on_ranks(comms, body);
}

}  // namespace blscomm
