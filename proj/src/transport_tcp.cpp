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

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <thread>

#include "backend.hpp"
#include "blscomm/error.hpp"
#include "blscomm/log.hpp"
#include "blscomm/transport.hpp"

namespace blscomm {

namespace {

using Clock = std::chrono::steady_clock;

struct Endpoint {
  std::string host;
  std::uint16_t port;
};

Endpoint parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == s.size()) {
    throw ConfigError("invalid endpoint '" + s + "', expected host:port");
  }
  Endpoint ep;
  ep.host = s.substr(0, colon);
  const long port = std::strtol(s.c_str() + colon + 1, nullptr, 10);
  if (port <= 0 || port > 65535) {
    throw ConfigError("invalid port in endpoint '" + s + "'");
  }
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

sockaddr_in resolve(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(ep.port);
  if (::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
    throw SetupError("cannot resolve endpoint " + ep.host + ":" + port);
  }
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof(addr));
  ::freeaddrinfo(res);
  return addr;
}

void write_all(int fd, const std::byte* data, std::size_t len) {
  std::size_t sent = 0;
  while (sent < len) {
    const ssize_t n = ::send(fd, data + sent, len - sent, MSG_NOSIGNAL);
    if (n <= 0) {
      if (n < 0 && errno == EINTR) continue;
      throw TransportError("socket send failed: " + std::string(std::strerror(errno)));
    }
    sent += static_cast<std::size_t>(n);
  }
}

// Returns false on clean EOF at a frame boundary.
bool read_all(int fd, std::byte* data, std::size_t len) {
  std::size_t got = 0;
  while (got < len) {
    const ssize_t n = ::recv(fd, data + got, len - got, 0);
    if (n == 0) {
      if (got == 0) return false;
      throw TransportError("socket closed mid-frame");
    }
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError("socket recv failed: " + std::string(std::strerror(errno)));
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

class TcpBackendImpl : public Backend {
 public:
  TcpBackendImpl(int rank, int size, std::vector<int> fds)
      : rank_(rank), size_(size), fds_(std::move(fds)) {
    out_.reserve(static_cast<std::size_t>(size));
    for (int p = 0; p < size; ++p) out_.push_back(std::make_unique<Outbox>());
  }

  ~TcpBackendImpl() override { shutdown(); }

  void send(int dest, Frame&& frame) override {
    Outbox& box = *out_[static_cast<std::size_t>(dest)];
    auto bytes = encode_frame(frame);
    {
      std::lock_guard<std::mutex> lk(box.mu);
      if (box.stop) return;
      box.q.push_back(std::move(bytes));
    }
    box.cv.notify_one();
  }

  void start(Communicator* self) override {
    comm_ = self;
    for (int p = 0; p < size_; ++p) {
      if (p == rank_) continue;
      readers_.emplace_back([this, p] { reader_loop(p); });
      writers_.emplace_back([this, p] { writer_loop(p); });
    }
  }

  void shutdown() override {
    bool expected = false;
    if (!shutting_down_.compare_exchange_strong(expected, true)) return;
    // Flush writers first so peers still receive anything queued.
    for (auto& box : out_) {
      {
        std::lock_guard<std::mutex> lk(box->mu);
        box->stop = true;
      }
      box->cv.notify_all();
    }
    for (auto& t : writers_) {
      if (t.joinable()) t.join();
    }
    for (int p = 0; p < size_; ++p) {
      if (fds_[static_cast<std::size_t>(p)] >= 0) {
        ::shutdown(fds_[static_cast<std::size_t>(p)], SHUT_RDWR);
      }
    }
    for (auto& t : readers_) {
      if (t.joinable()) t.join();
    }
    for (int p = 0; p < size_; ++p) {
      int& fd = fds_[static_cast<std::size_t>(p)];
      if (fd >= 0) {
        ::close(fd);
        fd = -1;
      }
    }
  }

 private:
  struct Outbox {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::vector<std::byte>> q;
    bool stop = false;
  };

  void reader_loop(int peer) {
    const int fd = fds_[static_cast<std::size_t>(peer)];
    try {
      for (;;) {
        std::array<std::byte, kFrameHeaderBytes> hdr{};
        if (!read_all(fd, hdr.data(), hdr.size())) break;  // EOF
        Frame f;
        f.header = decode_frame_header(std::span<const std::byte, kFrameHeaderBytes>(hdr));
        f.payload.resize(f.header.length);
        if (f.header.length > 0 && !read_all(fd, f.payload.data(), f.payload.size())) {
          throw TransportError("socket closed mid-frame");
        }
        comm_->apply_frame(f);
      }
      if (!shutting_down_.load()) {
        comm_->fail("rank " + std::to_string(peer) + " disconnected");
      }
    } catch (const std::exception& e) {
      if (!shutting_down_.load()) {
        BLSCOMM_LOG_ERROR("reader for peer %d failed: %s", peer, e.what());
        comm_->fail(e.what());
      }
    }
  }

  void writer_loop(int peer) {
    Outbox& box = *out_[static_cast<std::size_t>(peer)];
    const int fd = fds_[static_cast<std::size_t>(peer)];
    try {
      for (;;) {
        std::vector<std::byte> bytes;
        {
          std::unique_lock<std::mutex> lk(box.mu);
          box.cv.wait(lk, [&] { return box.stop || !box.q.empty(); });
          if (box.q.empty()) return;  // stop requested and flushed
          bytes = std::move(box.q.front());
          box.q.pop_front();
        }
        write_all(fd, bytes.data(), bytes.size());
      }
    } catch (const std::exception& e) {
      if (!shutting_down_.load()) {
        BLSCOMM_LOG_ERROR("writer for peer %d failed: %s", peer, e.what());
        comm_->fail(e.what());
      }
    }
  }

  int rank_;
  int size_;
  std::vector<int> fds_;
  std::vector<std::unique_ptr<Outbox>> out_;
  std::vector<std::thread> readers_;
  std::vector<std::thread> writers_;
  Communicator* comm_ = nullptr;
  std::atomic<bool> shutting_down_{false};
};

int make_listener(const Endpoint& ep) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw SetupError("cannot create listening socket");
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = resolve(ep);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
    ::close(fd);
    throw SetupError("cannot bind " + ep.host + ":" + std::to_string(ep.port) + ": " +
                     std::strerror(errno));
  }
  if (::listen(fd, 64) < 0) {
    ::close(fd);
    throw SetupError("cannot listen on " + ep.host + ":" + std::to_string(ep.port));
  }
  return fd;
}

int connect_with_retry(const Endpoint& ep, Clock::time_point deadline) {
  const sockaddr_in addr = resolve(ep);
  for (;;) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw SetupError("cannot create socket");
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) {
      set_nodelay(fd);
      return fd;
    }
    ::close(fd);
    if (Clock::now() >= deadline) {
      throw SetupError("connection to " + ep.host + ":" + std::to_string(ep.port) +
                       " timed out");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

Frame read_frame_blocking(int fd, Clock::time_point deadline) {
  // Setup-phase read with a coarse deadline via SO_RCVTIMEO.
  timeval tv{};
  tv.tv_sec = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  std::array<std::byte, kFrameHeaderBytes> hdr{};
  std::size_t got = 0;
  while (got < hdr.size()) {
    const ssize_t n = ::recv(fd, hdr.data() + got, hdr.size() - got, 0);
    if (n > 0) {
      got += static_cast<std::size_t>(n);
      continue;
    }
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR)) {
      if (Clock::now() >= deadline) throw SetupError("handshake read timed out");
      continue;
    }
    throw SetupError("handshake read failed");
  }
  Frame f;
  f.header = decode_frame_header(std::span<const std::byte, kFrameHeaderBytes>(hdr));
  f.payload.resize(f.header.length);
  got = 0;
  while (got < f.payload.size()) {
    const ssize_t n = ::recv(fd, f.payload.data() + got, f.payload.size() - got, 0);
    if (n > 0) {
      got += static_cast<std::size_t>(n);
      continue;
    }
    if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR)) {
      if (Clock::now() >= deadline) throw SetupError("handshake read timed out");
      continue;
    }
    throw SetupError("handshake read failed");
  }
  timeval off{};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &off, sizeof(off));
  return f;
}

void send_hello(int fd, int comm_size, int rank) {
  Frame f;
  f.header.slot = kControlSlot;
  f.header.tag = static_cast<Tag>(ControlKind::hello);
  f.header.source = static_cast<std::uint16_t>(rank);
  HelloBody body;
  body.comm_size = static_cast<std::uint32_t>(comm_size);
  body.rank = static_cast<std::uint16_t>(rank);
  f.payload = encode_hello(body);
  f.header.length = static_cast<std::uint32_t>(f.payload.size());
  const auto bytes = encode_frame(f);
  write_all(fd, bytes.data(), bytes.size());
}

}  // namespace

std::pair<std::vector<std::string>, std::vector<int>> reserve_loopback_endpoints(int comm_size) {
  std::vector<std::string> endpoints;
  std::vector<int> fds;
  for (int r = 0; r < comm_size; ++r) {
    const int fd = make_listener(Endpoint{"127.0.0.1", 0});
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    endpoints.push_back("127.0.0.1:" + std::to_string(ntohs(addr.sin_port)));
    fds.push_back(fd);
  }
  return {std::move(endpoints), std::move(fds)};
}

std::unique_ptr<Communicator> create_tcp_comm(int comm_size, int rank,
                                              const std::vector<std::string>& endpoints,
                                              const TcpOptions& options) {
  if (comm_size < 1) throw ConfigError("create_tcp_comm: comm_size must be >= 1");
  if (rank < 0 || rank >= comm_size) throw ConfigError("create_tcp_comm: rank out of range");
  if (endpoints.size() != static_cast<std::size_t>(comm_size)) {
    throw ConfigError("create_tcp_comm: endpoints must have comm_size entries");
  }
  const auto timeout = options.setup_timeout.value_or(setup_timeout_from_env());
  const auto deadline = Clock::now() + timeout;

  std::vector<int> fds(static_cast<std::size_t>(comm_size), -1);
  int listener = options.listen_fd;
  if (comm_size > 1 && listener < 0) {
    listener = make_listener(parse_endpoint(endpoints[static_cast<std::size_t>(rank)]));
  }

  try {
    // Connect to every lower rank, announcing ourselves.
    for (int peer = 0; peer < rank; ++peer) {
      const int fd =
          connect_with_retry(parse_endpoint(endpoints[static_cast<std::size_t>(peer)]), deadline);
      send_hello(fd, comm_size, rank);
      fds[static_cast<std::size_t>(peer)] = fd;
    }
    // Accept every higher rank.
    int expected = comm_size - 1 - rank;
    while (expected > 0) {
      pollfd pfd{listener, POLLIN, 0};
      const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - Clock::now());
      if (remaining.count() <= 0) throw SetupError("timed out accepting peer connections");
      const int pr = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(
                                         remaining.count(), 1000)));
      if (pr < 0 && errno != EINTR) throw SetupError("poll on listener failed");
      if (pr <= 0) continue;
      const int fd = ::accept(listener, nullptr, nullptr);
      if (fd < 0) throw SetupError("accept failed");
      set_nodelay(fd);
      const Frame hello = read_frame_blocking(fd, deadline);
      if (!hello.header.is_control() ||
          static_cast<ControlKind>(hello.header.tag) != ControlKind::hello) {
        ::close(fd);
        throw SetupError("unexpected frame during handshake");
      }
      const HelloBody body = decode_hello(hello.payload);
      if (body.comm_size != static_cast<std::uint32_t>(comm_size)) {
        ::close(fd);
        throw SetupError("peer announced a different comm_size");
      }
      if (body.rank <= static_cast<std::uint32_t>(rank) ||
          body.rank >= static_cast<std::uint32_t>(comm_size)) {
        ::close(fd);
        throw SetupError("peer announced an invalid rank id");
      }
      if (fds[body.rank] != -1) {
        ::close(fd);
        throw SetupError("duplicate rank id " + std::to_string(body.rank));
      }
      fds[body.rank] = fd;
      --expected;
    }
  } catch (...) {
    if (listener >= 0) ::close(listener);
    for (int fd : fds) {
      if (fd >= 0) ::close(fd);
    }
    throw;
  }
  if (listener >= 0) ::close(listener);

  std::unique_ptr<Communicator> comm(new Communicator(rank, comm_size));
  comm->setup_timeout_ = timeout;
  comm->backend_ = std::make_unique<TcpBackendImpl>(rank, comm_size, std::move(fds));
  comm->backend_->start(comm.get());
  return comm;
}

}  // namespace blscomm
