#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <utility>

#include "portwin/core/error.hpp"

namespace portwin {

struct Endpoint {
  std::string host = "127.0.0.1";
  int port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

/// Parses "host:port"; port 0 asks the system for a free port.
inline Endpoint parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos || colon == 0) throw ConfigError("endpoint '" + s + "' is not host:port");
  Endpoint e;
  e.host = s.substr(0, colon);
  const std::string port = s.substr(colon + 1);
  if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos || port.size() > 5) {
    throw ConfigError("endpoint '" + s + "' has an invalid port");
  }
  e.port = std::stoi(port);
  if (e.port > 65535) throw ConfigError("endpoint '" + s + "' has an invalid port");
  return e;
}

namespace detail {

inline sockaddr_in resolve_ipv4(const Endpoint& e) {
  sockaddr_in a{};
  a.sin_family = AF_INET;
  a.sin_port = htons(static_cast<std::uint16_t>(e.port));
  const std::string host = e.host == "localhost" ? "127.0.0.1" : e.host;
  if (inet_pton(AF_INET, host.c_str(), &a.sin_addr) == 1) return a;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) {
    throw IoError("cannot resolve host '" + e.host + "'");
  }
  a.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return a;
}

inline std::string errno_text() { return std::strerror(errno); }

}  // namespace detail

/// Owning stream socket.
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

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }

  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  /// Wakes up any thread blocked on this socket.
  void shutdown() const {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
  }

  void set_send_timeout(int ms) const {
    timeval tv{ms / 1000, (ms % 1000) * 1000};
    setsockopt(fd_, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
  }

  void set_nodelay() const {
    int one = 1;
    setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }

  void send_all(const std::uint8_t* p, std::size_t n) const {
    while (n > 0) {
      const ssize_t k = ::send(fd_, p, n, MSG_NOSIGNAL);
      if (k < 0) {
        if (errno == EINTR) continue;
        throw IoError("send failed: " + detail::errno_text());
      }
      p += k;
      n -= static_cast<std::size_t>(k);
    }
  }

  /// Bytes read (0 on orderly close), or nothing on timeout. A negative
  /// timeout waits indefinitely.
  std::optional<std::size_t> recv_some(std::uint8_t* p, std::size_t n, int timeout_ms = -1) const {
    for (;;) {
      pollfd pfd{fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, timeout_ms);
      if (rc == 0) return std::nullopt;
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw IoError("poll failed: " + detail::errno_text());
      }
      const ssize_t k = ::recv(fd_, p, n, 0);
      if (k < 0) {
        if (errno == EINTR) continue;
        if (errno == ECONNRESET) return 0;
        throw IoError("recv failed: " + detail::errno_text());
      }
      return static_cast<std::size_t>(k);
    }
  }

 private:
  int fd_ = -1;
};

inline Socket connect_to(const Endpoint& e) {
  const sockaddr_in a = detail::resolve_ipv4(e);
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) throw IoError("socket failed: " + detail::errno_text());
  if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&a), sizeof a) != 0) {
    throw IoError("cannot connect to " + e.str() + ": " + detail::errno_text());
  }
  s.set_nodelay();
  return s;
}

class Listener {
 public:
  Listener() = default;
  explicit Listener(const Endpoint& e) {
    const sockaddr_in a = detail::resolve_ipv4(e);
    sock_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!sock_.valid()) throw IoError("socket failed: " + detail::errno_text());
    int one = 1;
    setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(sock_.fd(), reinterpret_cast<const sockaddr*>(&a), sizeof a) != 0) {
      throw IoError("cannot bind " + e.str() + ": " + detail::errno_text());
    }
    if (::listen(sock_.fd(), 64) != 0) throw IoError("listen failed: " + detail::errno_text());
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&bound), &len);
    endpoint_ = e;
    endpoint_.port = ntohs(bound.sin_port);
  }

  const Endpoint& endpoint() const { return endpoint_; }
  bool valid() const { return sock_.valid(); }

  /// Next connection, or nothing after `timeout_ms`.
  std::optional<Socket> accept(int timeout_ms) const {
    pollfd pfd{sock_.fd(), POLLIN, 0};
    const int rc = ::poll(&pfd, 1, timeout_ms);
    if (rc <= 0) return std::nullopt;
    const int fd = ::accept(sock_.fd(), nullptr, nullptr);
    if (fd < 0) return std::nullopt;
    Socket s(fd);
    s.set_nodelay();
    return s;
  }

  void close() { sock_.close(); }

 private:
  Socket sock_;
  Endpoint endpoint_;
};

}  // namespace portwin
