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

#include "blscomm/collective.hpp"

#include <cstring>

#include "blscomm/error.hpp"
#include "blscomm/log.hpp"

namespace blscomm {

namespace {

constexpr std::size_t kLengthHeaderBytes = 4;

void pack_segment(std::vector<std::byte>& scratch, std::span<const std::byte> segment) {
  scratch.resize(kLengthHeaderBytes + segment.size());
  put_le32(scratch.data(), static_cast<std::uint32_t>(segment.size()));
  if (!segment.empty()) {
    std::memcpy(scratch.data() + kLengthHeaderBytes, segment.data(), segment.size());
  }
}

/// Verifies stamps and copies every source segment out of a slot.
/// Runs under the slot lock, so the copy is atomic with respect to
/// concurrent deliveries; a racing overwrite therefore shows up as a
/// stamp mismatch, never as silently mixed bytes.
RecvResult copy_out_slot(Communicator& comm, WindowId window, int local_slot,
                         std::uint64_t expected_iteration, std::size_t per_peer_payload,
                         std::span<const std::uint32_t> expected_lengths) {
  RecvResult result;
  result.iteration = expected_iteration;
  result.segments.resize(static_cast<std::size_t>(comm.size()));
  const std::size_t seg_capacity = kLengthHeaderBytes + per_peer_payload;
  comm.with_slot(window, local_slot,
                 [&](std::span<const std::byte> bytes, std::span<const std::uint64_t> stamps) {
    for (int src = 0; src < comm.size(); ++src) {
      const std::uint64_t stamp = stamps[static_cast<std::size_t>(src)];
      if (stamp != expected_iteration) {
        throw HazardError(
            "slot-reuse hazard at rank " + std::to_string(comm.rank()) + ": segment from rank " +
                std::to_string(src) + " carries iteration " +
                (stamp == kNoStamp ? std::string("<none>") : std::to_string(stamp)) +
                ", expected " + std::to_string(expected_iteration),
            src, expected_iteration, stamp);
      }
      const std::byte* seg = bytes.data() + static_cast<std::size_t>(src) * seg_capacity;
      const std::uint32_t declared = get_le32(seg);
      if (declared > per_peer_payload) {
        throw ProtocolError("declared segment length exceeds window capacity");
      }
      if (!expected_lengths.empty() &&
          declared != expected_lengths[static_cast<std::size_t>(src)]) {
        throw ProtocolError("segment length from rank " + std::to_string(src) + " is " +
                            std::to_string(declared) + ", expected " +
                            std::to_string(expected_lengths[static_cast<std::size_t>(src)]));
      }
      auto& out = result.segments[static_cast<std::size_t>(src)];
      out.resize(declared);
      if (declared > 0) std::memcpy(out.data(), seg + kLengthHeaderBytes, declared);
    }
  });
  return result;
}

}  // namespace

BlsContext::BlsContext(Communicator& comm, const BlsConfig& config)
    : comm_(comm), config_(config) {
  if (config_.bound_k < 0) throw ConfigError("bls: bound_k must be >= 0");
  if (config_.slot_count < 0) throw ConfigError("bls: slot_count must be >= 0");
  if (config_.per_peer_bytes == 0) throw ConfigError("bls: per_peer_bytes must be positive");
  if (!comm_.try_acquire_bls_context()) {
    throw ConfigError("bls: a context already exists on this communicator");
  }
  try {
    const int slots = config_.effective_slot_count();
    data_window_ = comm_.register_window(slots, kLengthHeaderBytes + config_.per_peer_bytes);
    if (config_.safety == SafetyMode::acked) {
      ack_window_ = comm_.register_window(1, sizeof(std::uint64_t));
      has_ack_window_ = true;
    }
  } catch (...) {
    comm_.release_bls_context();
    throw;
  }
}

BlsContext::~BlsContext() { comm_.release_bls_context(); }

std::vector<std::uint64_t> BlsContext::read_ack_counts() const {
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(comm_.size()), 0);
  const_cast<Communicator&>(comm_).with_slot(
      ack_window_, 0,
      [&](std::span<const std::byte> bytes, std::span<const std::uint64_t>) {
        for (int src = 0; src < comm_.size(); ++src) {
          counts[static_cast<std::size_t>(src)] =
              get_le64(bytes.data() + static_cast<std::size_t>(src) * sizeof(std::uint64_t));
        }
      });
  return counts;
}

void BlsContext::gate_on_acks(std::uint64_t iteration,
                              std::optional<std::chrono::milliseconds> deadline) {
  const auto slots = static_cast<std::uint64_t>(slot_count());
  if (iteration < slots) return;
  const std::uint64_t needed = iteration - slots + 1;
  const Tag ack_tag = static_cast<Tag>(comm_.window_base(ack_window_));
  for (;;) {
    const auto counts = read_ack_counts();
    bool all = consumed_ >= needed;
    for (int src = 0; all && src < comm_.size(); ++src) {
      if (src == comm_.rank()) continue;
      if (counts[static_cast<std::size_t>(src)] < needed) all = false;
    }
    if (all) return;
    comm_.await_count(ack_tag, 1, deadline);
  }
}

std::uint64_t BlsContext::initiate(std::span<const std::span<const std::byte>> send_segments,
                                   std::span<const std::uint32_t> recv_lengths,
                                   std::optional<std::chrono::milliseconds> deadline) {
  if (send_segments.size() != static_cast<std::size_t>(comm_.size())) {
    throw ProtocolError("initiate: need one send segment per rank");
  }
  if (!recv_lengths.empty() && recv_lengths.size() != static_cast<std::size_t>(comm_.size())) {
    throw ProtocolError("initiate: recv_lengths must be empty or per-rank");
  }
  for (const auto& seg : send_segments) {
    if (seg.size() > config_.per_peer_bytes) {
      throw ProtocolError("initiate: segment exceeds per_peer_bytes");
    }
  }
  if (static_cast<int>(fifo_.size()) >= slot_count()) {
    throw ProtocolError("initiate: too many outstanding requests (" +
                        std::to_string(fifo_.size()) + " of " + std::to_string(slot_count()) +
                        " slots)");
  }
  if (config_.safety == SafetyMode::acked) {
    gate_on_acks(next_iteration_, deadline);
  }

  const std::uint64_t iteration = next_iteration_;
  const int local_slot = tag_of(iteration);
  const int global_slot = comm_.window_base(data_window_) + local_slot;
  for (int dest = 0; dest < comm_.size(); ++dest) {
    pack_segment(scratch_, send_segments[static_cast<std::size_t>(dest)]);
    PutDescriptor desc;
    desc.dest = dest;
    desc.slot = global_slot;
    desc.offset_bytes = 0;
    desc.length_bytes = scratch_.size();
    desc.tag = static_cast<Tag>(global_slot);
    desc.iteration = iteration;
    desc.payload = scratch_;
    comm_.put(desc);
  }

  Pending p;
  p.iteration = iteration;
  p.local_slot = local_slot;
  p.expected_lengths.assign(recv_lengths.begin(), recv_lengths.end());
  fifo_.push_back(std::move(p));
  next_iteration_ += 1;
  return iteration;
}

RecvResult BlsContext::wait(std::optional<std::chrono::milliseconds> deadline) {
  if (fifo_.empty()) throw ProtocolError("wait: no outstanding request");
  const Pending& req = fifo_.front();
  const int global_slot = comm_.window_base(data_window_) + req.local_slot;
  comm_.await_count(static_cast<Tag>(global_slot), comm_.size() - 1, deadline);

  RecvResult result = copy_out_slot(comm_, data_window_, req.local_slot, req.iteration,
                                    config_.per_peer_bytes, req.expected_lengths);
  fifo_.pop_front();
  consumed_ += 1;

  if (config_.safety == SafetyMode::acked) {
    std::byte ack[sizeof(std::uint64_t)];
    put_le64(ack, consumed_);
    const int ack_slot = comm_.window_base(ack_window_);
    for (int dest = 0; dest < comm_.size(); ++dest) {
      PutDescriptor desc;
      desc.dest = dest;
      desc.slot = ack_slot;
      desc.offset_bytes = 0;
      desc.length_bytes = sizeof(ack);
      desc.tag = static_cast<Tag>(ack_slot);
      desc.iteration = result.iteration;
      desc.payload = std::span<const std::byte>(ack, sizeof(ack));
      comm_.put(desc);
    }
  }
  return result;
}

std::vector<RecvResult> BlsContext::drain(std::optional<std::chrono::milliseconds> deadline) {
  std::vector<RecvResult> results;
  results.reserve(fifo_.size());
  while (!fifo_.empty()) {
    results.push_back(wait(deadline));
  }
  return results;
}

RefA2AContext::RefA2AContext(Communicator& comm, std::size_t per_peer_bytes)
    : comm_(comm), per_peer_bytes_(per_peer_bytes) {
  if (per_peer_bytes_ == 0) throw ConfigError("ref alltoallv: per_peer_bytes must be positive");
  window_ = comm_.register_window(1, kLengthHeaderBytes + per_peer_bytes_);
}

RecvResult RefA2AContext::exchange(std::span<const std::span<const std::byte>> send_segments,
                                   std::span<const std::uint32_t> recv_lengths,
                                   std::optional<std::chrono::milliseconds> deadline) {
  if (send_segments.size() != static_cast<std::size_t>(comm_.size())) {
    throw ProtocolError("ref alltoallv: need one send segment per rank");
  }
  for (const auto& seg : send_segments) {
    if (seg.size() > per_peer_bytes_) {
      throw ProtocolError("ref alltoallv: segment exceeds per_peer_bytes");
    }
  }
  const int global_slot = comm_.window_base(window_);
  for (int dest = 0; dest < comm_.size(); ++dest) {
    pack_segment(scratch_, send_segments[static_cast<std::size_t>(dest)]);
    PutDescriptor desc;
    desc.dest = dest;
    desc.slot = global_slot;
    desc.offset_bytes = 0;
    desc.length_bytes = scratch_.size();
    desc.tag = static_cast<Tag>(global_slot);
    desc.iteration = round_;
    desc.payload = scratch_;
    comm_.put(desc);
  }
  comm_.await_count(static_cast<Tag>(global_slot), comm_.size() - 1, deadline);
  RecvResult result =
      copy_out_slot(comm_, window_, 0, round_, per_peer_bytes_, recv_lengths);
  // The fence keeps the next round's puts out of the slot until every
  // rank finished its copy.
  comm_.fence();
  round_ += 1;
  return result;
}

std::uint64_t compute_bls_overhead(std::uint64_t k, std::uint64_t s, std::uint64_t b,
                                   std::uint64_t tables) {
  return k * (s * b * tables + s * s + b);
}

}  // namespace blscomm
