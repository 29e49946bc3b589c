#pragma once

// TCP star transport. A coordinator accepts F worker connections and, for
// every round, collects one CONTRIB_PAIR and one CONTRIB_FLAG frame from each
// worker and answers with RESULT_PAIR / RESULT_FLAG broadcasts.
//
// Frame layout (all integers little-endian):
//   u32 length   bytes that follow (type + round + payload)
//   u8  type     0x01 CONTRIB_PAIR, 0x02 CONTRIB_FLAG, 0x81 RESULT_PAIR, 0x82 RESULT_FLAG
//   u32 round
//   payload      pair: f64 distance + u64 index; flag: u8 (0 or 1)

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <bit>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dtwmatch/comms.hpp"
#include "dtwmatch/errors.hpp"
#include "dtwmatch/match_result.hpp"

namespace dtwmatch::tcp {

enum class FrameType : std::uint8_t {
  contrib_pair = 0x01,
  contrib_flag = 0x02,
  result_pair = 0x81,
  result_flag = 0x82,
};

struct Frame {
  FrameType type = FrameType::contrib_pair;
  std::uint32_t round = 0;
  MatchResult pair{};
  bool flag = false;

  [[nodiscard]] bool carries_pair() const noexcept {
    return type == FrameType::contrib_pair || type == FrameType::result_pair;
  }
  friend bool operator==(const Frame& a, const Frame& b) noexcept {
    if (a.type != b.type || a.round != b.round) { return false; }
    return a.carries_pair() ? std::bit_cast<std::uint64_t>(a.pair.distance) ==
                                      std::bit_cast<std::uint64_t>(b.pair.distance) &&
                                  a.pair.index == b.pair.index
                            : a.flag == b.flag;
  }
};

inline constexpr std::size_t kHeaderBytes = 4;
inline constexpr std::size_t kPairBody = 1 + 4 + 16;
inline constexpr std::size_t kFlagBody = 1 + 4 + 1;

namespace detail {
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) { out.push_back(static_cast<std::uint8_t>(v >> (8 * i))); }
}
inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) { out.push_back(static_cast<std::uint8_t>(v >> (8 * i))); }
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) { v |= std::uint32_t{p[i]} << (8 * i); }
  return v;
}
inline std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) { v |= std::uint64_t{p[i]} << (8 * i); }
  return v;
}
inline bool known_type(std::uint8_t t) { return t == 0x01 || t == 0x02 || t == 0x81 || t == 0x82; }
} // namespace detail

[[nodiscard]] inline std::vector<std::uint8_t> encode_frame(const Frame& f) {
  std::vector<std::uint8_t> out;
  const std::size_t body = f.carries_pair() ? kPairBody : kFlagBody;
  out.reserve(kHeaderBytes + body);
  detail::put_u32(out, static_cast<std::uint32_t>(body));
  out.push_back(static_cast<std::uint8_t>(f.type));
  detail::put_u32(out, f.round);
  if (f.carries_pair()) {
    detail::put_u64(out, std::bit_cast<std::uint64_t>(f.pair.distance));
    detail::put_u64(out, f.pair.index);
  } else {
    out.push_back(f.flag ? 1 : 0);
  }
  return out;
}

/// Decodes the body of a frame (everything after the length prefix).
[[nodiscard]] inline Frame decode_body(std::span<const std::uint8_t> body) {
  if (body.empty() || !detail::known_type(body[0])) { throw transport_error("malformed frame: unknown frame type"); }
  Frame f;
  f.type = static_cast<FrameType>(body[0]);
  const std::size_t expected = f.carries_pair() ? kPairBody : kFlagBody;
  if (body.size() != expected) {
    throw transport_error("malformed frame: body of " + std::to_string(body.size()) + " bytes, expected " +
                          std::to_string(expected));
  }
  f.round = detail::get_u32(body.data() + 1);
  if (f.carries_pair()) {
    f.pair.distance = std::bit_cast<double>(detail::get_u64(body.data() + 5));
    f.pair.index = detail::get_u64(body.data() + 13);
  } else {
    if (body[5] > 1) { throw transport_error("malformed frame: flag byte must be 0 or 1"); }
    f.flag = body[5] == 1;
  }
  return f;
}

[[nodiscard]] inline Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) { throw transport_error("malformed frame: truncated length prefix"); }
  const std::uint32_t len = detail::get_u32(bytes.data());
  if (bytes.size() != kHeaderBytes + len) { throw transport_error("malformed frame: length prefix mismatch"); }
  return decode_body(bytes.subspan(kHeaderBytes));
}

// ---------------------------------------------------------------------------
// Sockets

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  [[nodiscard]] std::string str() const { return host + ":" + std::to_string(port); }
};

[[nodiscard]] inline Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw config_error("expected HOST:PORT, got '" + text + "'");
  }
  Endpoint ep;
  ep.host = text.substr(0, colon);
  std::size_t used = 0;
  unsigned long port = 0;
  try {
    port = std::stoul(text.substr(colon + 1), &used);
  } catch (const std::exception&) {
    throw config_error("invalid port in '" + text + "'");
  }
  if (used != text.size() - colon - 1 || port > 65535) { throw config_error("invalid port in '" + text + "'"); }
  ep.port = static_cast<std::uint16_t>(port);
  return ep;
}

class Socket {
public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  [[nodiscard]] int fd() const noexcept { return fd_; }
  [[nodiscard]] bool valid() const noexcept { return fd_ >= 0; }
  void close() noexcept {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  void send_all(std::span<const std::uint8_t> bytes) const {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
      const auto r = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
      if (r < 0) {
        if (errno == EINTR) { continue; }
        throw transport_error(std::string("send failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(r);
    }
  }

  void recv_exact(std::uint8_t* out, std::size_t count, std::chrono::milliseconds timeout) const {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::size_t got = 0;
    while (got < count) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) { throw transport_error("timed out waiting for peer"); }
      pollfd pfd{fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (ready < 0) {
        if (errno == EINTR) { continue; }
        throw transport_error(std::string("poll failed: ") + std::strerror(errno));
      }
      if (ready == 0) { throw transport_error("timed out waiting for peer"); }
      const auto r = ::recv(fd_, out + got, count - got, 0);
      if (r == 0) { throw transport_error("peer closed the connection"); }
      if (r < 0) {
        if (errno == EINTR || errno == EAGAIN) { continue; }
        throw transport_error(std::string("recv failed: ") + std::strerror(errno));
      }
      got += static_cast<std::size_t>(r);
    }
  }

  void write_frame(const Frame& f) const { send_all(encode_frame(f)); }

  [[nodiscard]] Frame read_frame(std::chrono::milliseconds timeout) const {
    std::uint8_t header[kHeaderBytes];
    recv_exact(header, kHeaderBytes, timeout);
    const std::uint32_t len = detail::get_u32(header);
    if (len != kPairBody && len != kFlagBody) {
      throw transport_error("malformed frame: unexpected length " + std::to_string(len));
    }
    std::vector<std::uint8_t> body(len);
    recv_exact(body.data(), len, timeout);
    return decode_body(body);
  }

private:
  int fd_ = -1;
};

namespace detail {
inline addrinfo* resolve(const Endpoint& ep, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) { hints.ai_flags = AI_PASSIVE; }
  addrinfo* res = nullptr;
  const std::string port = std::to_string(ep.port);
  const int rc = ::getaddrinfo(ep.host.empty() ? nullptr : ep.host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0) { throw transport_error("cannot resolve " + ep.str() + ": " + ::gai_strerror(rc)); }
  return res;
}
inline void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}
} // namespace detail

class Listener {
public:
  explicit Listener(const Endpoint& ep, int backlog = 64) {
    addrinfo* res = detail::resolve(ep, true);
    int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd < 0) {
      ::freeaddrinfo(res);
      throw transport_error(std::string("socket failed: ") + std::strerror(errno));
    }
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd, backlog) != 0) {
      const std::string err = std::strerror(errno);
      ::close(fd);
      ::freeaddrinfo(res);
      throw transport_error("cannot listen on " + ep.str() + ": " + err);
    }
    ::freeaddrinfo(res);
    socket_ = Socket(fd);
    sockaddr_in addr{};
    socklen_t len = sizeof(addr);
    ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }

  [[nodiscard]] std::uint16_t port() const noexcept { return port_; }

  [[nodiscard]] Socket accept(std::chrono::milliseconds timeout) const {
    pollfd pfd{socket_.fd(), POLLIN, 0};
    for (;;) {
      const int ready = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
      if (ready < 0 && errno == EINTR) { continue; }
      if (ready <= 0) { throw transport_error("timed out waiting for workers to connect"); }
      break;
    }
    const int fd = ::accept(socket_.fd(), nullptr, nullptr);
    if (fd < 0) { throw transport_error(std::string("accept failed: ") + std::strerror(errno)); }
    detail::set_nodelay(fd);
    return Socket(fd);
  }

private:
  Socket socket_;
  std::uint16_t port_ = 0;
};

/// Connects, retrying until `timeout` so workers may start before the coordinator.
[[nodiscard]] inline Socket connect_to(const Endpoint& ep, std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  std::string last_error;
  do {
    addrinfo* res = detail::resolve(ep, false);
    const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) == 0) {
      ::freeaddrinfo(res);
      detail::set_nodelay(fd);
      return Socket(fd);
    }
    last_error = std::strerror(errno);
    if (fd >= 0) { ::close(fd); }
    ::freeaddrinfo(res);
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  } while (std::chrono::steady_clock::now() < deadline);
  throw transport_error("cannot connect to coordinator " + ep.str() + ": " + last_error);
}

// ---------------------------------------------------------------------------

/// Hosts the reductions for a fixed number of workers.
class Coordinator {
public:
  Coordinator(const Endpoint& listen, std::size_t workers, std::chrono::milliseconds timeout = kDefaultRoundTimeout)
      : listener_(listen), workers_(workers), timeout_(timeout) {
    if (workers == 0) { throw config_error("coordinator needs at least one worker"); }
  }

  [[nodiscard]] std::uint16_t port() const noexcept { return listener_.port(); }
  [[nodiscard]] std::uint32_t rounds() const noexcept { return rounds_; }

  /// Accepts every worker and runs rounds until all report done. Returns the
  /// final reduced pair. Any failure closes every connection.
  MatchResult serve() {
    std::vector<Socket> peers;
    peers.reserve(workers_);
    for (std::size_t i = 0; i < workers_; ++i) { peers.push_back(listener_.accept(timeout_)); }

    for (std::uint32_t round = 0;; ++round) {
      MatchResult best{};
      bool first = true;
      for (auto& peer : peers) {
        const Frame f = expect(peer, FrameType::contrib_pair, round);
        best = first ? f.pair : min_match(best, f.pair);
        first = false;
      }
      for (auto& peer : peers) { peer.write_frame(Frame{FrameType::result_pair, round, best, false}); }

      bool all_done = true;
      for (auto& peer : peers) { all_done = expect(peer, FrameType::contrib_flag, round).flag && all_done; }
      for (auto& peer : peers) { peer.write_frame(Frame{FrameType::result_flag, round, {}, all_done}); }

      rounds_ = round + 1;
      if (all_done) { return best; }
    }
  }

private:
  Frame expect(const Socket& peer, FrameType type, std::uint32_t round) const {
    const Frame f = peer.read_frame(timeout_);
    if (f.type != type || f.round != round) {
      throw transport_error("protocol error: expected frame type " + std::to_string(static_cast<int>(type)) +
                            " for round " + std::to_string(round) + ", got type " +
                            std::to_string(static_cast<int>(f.type)) + " round " + std::to_string(f.round));
    }
    return f;
  }

  Listener listener_;
  std::size_t workers_;
  std::chrono::milliseconds timeout_;
  std::uint32_t rounds_ = 0;
};

class TcpReducer final : public Reducer {
public:
  TcpReducer(const Endpoint& coordinator, std::chrono::milliseconds timeout = kDefaultRoundTimeout)
      : socket_(connect_to(coordinator, timeout)), timeout_(timeout) {}

  MatchResult allreduce_min_pair(MatchResult contribution) override {
    socket_.write_frame(Frame{FrameType::contrib_pair, round_, contribution, false});
    return expect(FrameType::result_pair).pair;
  }

  bool allreduce_and(bool flag) override {
    socket_.write_frame(Frame{FrameType::contrib_flag, round_, {}, flag});
    const bool result = expect(FrameType::result_flag).flag;
    ++round_;
    return result;
  }

  /// Drops the connection; the coordinator then fails the whole search.
  void close() noexcept { socket_.close(); }

private:
  Frame expect(FrameType type) {
    const Frame f = socket_.read_frame(timeout_);
    if (f.type != type || f.round != round_) {
      throw transport_error("protocol error: unexpected reply for round " + std::to_string(round_));
    }
    return f;
  }

  Socket socket_;
  std::chrono::milliseconds timeout_;
  std::uint32_t round_ = 0;
};

} // namespace dtwmatch::tcp
