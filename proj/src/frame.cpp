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

#include "blscomm/frame.hpp"

#include <cstring>

#include "blscomm/error.hpp"

namespace blscomm {

void put_le16(std::byte* p, std::uint16_t v) {
  p[0] = static_cast<std::byte>(v & 0xFF);
  p[1] = static_cast<std::byte>((v >> 8) & 0xFF);
}

void put_le32(std::byte* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::byte>((v >> (8 * i)) & 0xFF);
}

void put_le64(std::byte* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<std::byte>((v >> (8 * i)) & 0xFF);
}

std::uint16_t get_le16(const std::byte* p) {
  return static_cast<std::uint16_t>(static_cast<std::uint16_t>(p[0]) |
                                    (static_cast<std::uint16_t>(p[1]) << 8));
}

std::uint32_t get_le32(const std::byte* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_le64(const std::byte* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void encode_frame_header(const FrameHeader& h, std::byte out[kFrameHeaderBytes]) {
  put_le32(out + 0, kFrameMagic);
  out[4] = static_cast<std::byte>(kFrameVersion);
  put_le16(out + 5, h.tag);
  put_le16(out + 7, h.slot);
  put_le16(out + 9, h.source);
  put_le64(out + 11, h.iteration);
  put_le32(out + 19, h.offset);
  put_le32(out + 23, h.length);
}

FrameHeader decode_frame_header(std::span<const std::byte, kFrameHeaderBytes> in) {
  if (get_le32(in.data()) != kFrameMagic) {
    throw TransportError("bad frame magic");
  }
  if (static_cast<std::uint8_t>(in[4]) != kFrameVersion) {
    throw TransportError("unsupported frame version");
  }
  FrameHeader h;
  h.tag = get_le16(in.data() + 5);
  h.slot = get_le16(in.data() + 7);
  h.source = get_le16(in.data() + 9);
  h.iteration = get_le64(in.data() + 11);
  h.offset = get_le32(in.data() + 19);
  h.length = get_le32(in.data() + 23);
  return h;
}

std::vector<std::byte> encode_frame(const Frame& f) {
  std::vector<std::byte> out(kFrameHeaderBytes + f.payload.size());
  encode_frame_header(f.header, out.data());
  if (!f.payload.empty()) {
    std::memcpy(out.data() + kFrameHeaderBytes, f.payload.data(), f.payload.size());
  }
  return out;
}

std::vector<std::byte> encode_hello(const HelloBody& b) {
  std::vector<std::byte> out(6);
  put_le32(out.data(), b.comm_size);
  put_le16(out.data() + 4, b.rank);
  return out;
}

HelloBody decode_hello(std::span<const std::byte> payload) {
  if (payload.size() != 6) throw TransportError("bad hello payload size");
  HelloBody b;
  b.comm_size = get_le32(payload.data());
  b.rank = get_le16(payload.data() + 4);
  return b;
}

std::vector<std::byte> encode_register(const RegisterBody& b) {
  std::vector<std::byte> out(24);
  put_le32(out.data(), b.window_index);
  put_le32(out.data() + 4, b.slot_count);
  put_le64(out.data() + 8, b.per_peer_bytes);
  put_le64(out.data() + 16, b.args_hash);
  return out;
}

RegisterBody decode_register(std::span<const std::byte> payload) {
  if (payload.size() != 24) throw TransportError("bad register payload size");
  RegisterBody b;
  b.window_index = get_le32(payload.data());
  b.slot_count = get_le32(payload.data() + 4);
  b.per_peer_bytes = get_le64(payload.data() + 8);
  b.args_hash = get_le64(payload.data() + 16);
  return b;
}

std::vector<std::byte> encode_fence(const FenceBody& b) {
  std::vector<std::byte> out(24);
  put_le64(out.data(), b.generation);
  put_le64(out.data() + 8, static_cast<std::uint64_t>(b.bytes_put));
  put_le64(out.data() + 16, static_cast<std::uint64_t>(b.bytes_applied));
  return out;
}

FenceBody decode_fence(std::span<const std::byte> payload) {
  if (payload.size() != 24) throw TransportError("bad fence payload size");
  FenceBody b;
  b.generation = get_le64(payload.data());
  b.bytes_put = static_cast<std::int64_t>(get_le64(payload.data() + 8));
  b.bytes_applied = static_cast<std::int64_t>(get_le64(payload.data() + 16));
  return b;
}

std::uint64_t registration_hash(std::uint32_t window_index, std::uint32_t slot_count,
                                std::uint64_t per_peer_bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  };
  mix(window_index);
  mix(slot_count);
  mix(per_peer_bytes);
  return h;
}

}  // namespace blscomm
