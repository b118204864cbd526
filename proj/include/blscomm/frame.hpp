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

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace blscomm {

// Wire format, little-endian, one frame per put:
//
//   offset  size  field
//   0       4     magic 0x424C5321
//   4       1     version (1)
//   5       2     tag
//   7       2     slot
//   9       2     source rank
//   11      8     iteration stamp
//   19      4     offset within the source's segment
//   23      4     payload length
//   27      -     payload
//
// Control traffic (setup handshakes, registration, fences) reuses the
// same header with the reserved slot value 0xFFFF; the tag then selects
// the control kind.

inline constexpr std::uint32_t kFrameMagic = 0x424C5321u;
inline constexpr std::uint8_t kFrameVersion = 1;
inline constexpr std::size_t kFrameHeaderBytes = 27;
inline constexpr std::uint16_t kControlSlot = 0xFFFF;

enum class ControlKind : std::uint16_t {
  hello = 0,
  register_window = 1,
  fence = 2,
};

struct FrameHeader {
  std::uint16_t tag = 0;
  std::uint16_t slot = 0;
  std::uint16_t source = 0;
  std::uint64_t iteration = 0;
  std::uint32_t offset = 0;
  std::uint32_t length = 0;

  bool is_control() const { return slot == kControlSlot; }
};

struct Frame {
  FrameHeader header;
  std::vector<std::byte> payload;
};

void encode_frame_header(const FrameHeader& h, std::byte out[kFrameHeaderBytes]);

/// Parses and validates a header. Throws TransportError on bad magic,
/// version, or a length/payload mismatch downstream.
FrameHeader decode_frame_header(std::span<const std::byte, kFrameHeaderBytes> in);

/// Full frame as one contiguous buffer (header + payload).
std::vector<std::byte> encode_frame(const Frame& f);

// Little-endian scalar helpers shared by control payload codecs.
void put_le16(std::byte* p, std::uint16_t v);
void put_le32(std::byte* p, std::uint32_t v);
void put_le64(std::byte* p, std::uint64_t v);
std::uint16_t get_le16(const std::byte* p);
std::uint32_t get_le32(const std::byte* p);
std::uint64_t get_le64(const std::byte* p);

// Control payload layouts.

struct HelloBody {  // 6 bytes
  std::uint32_t comm_size = 0;
  std::uint16_t rank = 0;
};

struct RegisterBody {  // 24 bytes
  std::uint32_t window_index = 0;
  std::uint32_t slot_count = 0;
  std::uint64_t per_peer_bytes = 0;
  std::uint64_t args_hash = 0;
};

struct FenceBody {  // 24 bytes
  std::uint64_t generation = 0;
  std::int64_t bytes_put = 0;
  std::int64_t bytes_applied = 0;
};

std::vector<std::byte> encode_hello(const HelloBody& b);
HelloBody decode_hello(std::span<const std::byte> payload);
std::vector<std::byte> encode_register(const RegisterBody& b);
RegisterBody decode_register(std::span<const std::byte> payload);
std::vector<std::byte> encode_fence(const FenceBody& b);
FenceBody decode_fence(std::span<const std::byte> payload);

/// FNV-1a over the registration arguments; exchanged across ranks to
/// detect mismatched collective registration calls.
std::uint64_t registration_hash(std::uint32_t window_index, std::uint32_t slot_count,
                                std::uint64_t per_peer_bytes);

}  // namespace blscomm
