#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>

#include "portwin/services/protocol.hpp"
#include "portwin/services/socket.hpp"
#include "portwin/services/websocket.hpp"

namespace portwin {

/// Bidirectional carrier of SWIN frames.
class FrameStream {
 public:
  virtual ~FrameStream() = default;

  /// Next frame; nothing on close (closed() turns true) or on timeout.
  /// A negative timeout waits indefinitely. Bad framing raises
  /// ProtocolError.
  virtual std::optional<Frame> read(int timeout_ms = -1) = 0;
  virtual void write(const ByteBuffer& frame) = 0;
  /// Unblocks pending reads and writes from any thread.
  virtual void shutdown() = 0;
  virtual bool closed() const = 0;
};

namespace detail {

class Deadline {
 public:
  explicit Deadline(int ms)
      : infinite_(ms < 0), end_(std::chrono::steady_clock::now() + std::chrono::milliseconds(ms < 0 ? 0 : ms)) {}
  int remaining() const {
    if (infinite_) return -1;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(end_ - std::chrono::steady_clock::now());
    return std::max<int>(0, static_cast<int>(left.count()));
  }

 private:
  bool infinite_;
  std::chrono::steady_clock::time_point end_;
};

}  // namespace detail

/// SWIN frames written directly on a TCP stream.
class TcpFrameStream : public FrameStream {
 public:
  explicit TcpFrameStream(Socket s) : sock_(std::move(s)) {}

  std::optional<Frame> read(int timeout_ms = -1) override {
    const detail::Deadline dl(timeout_ms);
    for (;;) {
      if (auto f = frames_.next()) return f;
      if (closed_) return std::nullopt;
      std::uint8_t buf[1 << 16];
      const auto n = sock_.recv_some(buf, sizeof buf, dl.remaining());
      if (!n) return std::nullopt;
      if (*n == 0) {
        closed_ = true;
        return std::nullopt;
      }
      frames_.feed(buf, *n);
    }
  }

  void write(const ByteBuffer& frame) override {
    std::lock_guard lock(write_mu_);
    sock_.send_all(frame.data(), frame.size());
  }

  void shutdown() override { sock_.shutdown(); }
  bool closed() const override { return closed_; }
  Socket& socket() { return sock_; }

 private:
  Socket sock_;
  FrameDecoder frames_;
  std::mutex write_mu_;
  bool closed_ = false;
};

/// SWIN frames carried in WebSocket binary messages.
class WsFrameStream : public FrameStream {
 public:
  enum class Role { Server, Client };

  WsFrameStream(Socket s, Role role, const ByteBuffer& leftover = {})
      : sock_(std::move(s)), role_(role), ws_(role == Role::Server), rng_(std::random_device{}()) {
    if (!leftover.empty()) ws_.feed(leftover.data(), leftover.size());
  }

  std::optional<Frame> read(int timeout_ms = -1) override {
    const detail::Deadline dl(timeout_ms);
    for (;;) {
      if (auto f = frames_.next()) return f;
      if (closed_) return std::nullopt;
      if (auto m = ws_.next()) {
        switch (m->opcode) {
          case WsOpcode::Binary:
            frames_.feed(m->payload);
            break;
          case WsOpcode::Ping:
            send(WsOpcode::Pong, m->payload);
            break;
          case WsOpcode::Pong:
            break;
          case WsOpcode::Close:
            try {
              send(WsOpcode::Close, m->payload.size() >= 2 ? ByteBuffer(m->payload.begin(), m->payload.begin() + 2)
                                                           : ByteBuffer{});
            } catch (const IoError&) {
            }
            closed_ = true;
            return std::nullopt;
          default:
            throw ProtocolError("text websocket messages are not part of the protocol");
        }
        continue;
      }
      std::uint8_t buf[1 << 16];
      const auto n = sock_.recv_some(buf, sizeof buf, dl.remaining());
      if (!n) return std::nullopt;
      if (*n == 0) {
        closed_ = true;
        return std::nullopt;
      }
      ws_.feed(buf, *n);
    }
  }

  void write(const ByteBuffer& frame) override { send(WsOpcode::Binary, frame); }

  /// Sends a close frame; the peer answers with its own.
  void close_handshake(std::uint16_t code = 1000) {
    const ByteBuffer body{static_cast<std::uint8_t>(code >> 8), static_cast<std::uint8_t>(code)};
    send(WsOpcode::Close, body);
  }

  void shutdown() override { sock_.shutdown(); }
  bool closed() const override { return closed_; }

 private:
  void send(WsOpcode op, const ByteBuffer& payload) {
    std::lock_guard lock(write_mu_);
    const bool mask = role_ == Role::Client;
    const ByteBuffer out = ws_encode(op, payload, mask, mask ? static_cast<std::uint32_t>(rng_()) : 0);
    sock_.send_all(out.data(), out.size());
  }

  Socket sock_;
  Role role_;
  WsDecoder ws_;
  FrameDecoder frames_;
  std::mutex write_mu_;
  std::mt19937 rng_;
  bool closed_ = false;
};

namespace detail {

// Reads an HTTP head up to the blank line; bytes after it are returned in
// `leftover`.
inline std::string read_http_head(const Socket& s, ByteBuffer& leftover, int timeout_ms) {
  const Deadline dl(timeout_ms);
  std::string data;
  for (;;) {
    const auto end = data.find("\r\n\r\n");
    if (end != std::string::npos) {
      leftover.assign(data.begin() + static_cast<std::ptrdiff_t>(end + 4), data.end());
      return data.substr(0, end + 4);
    }
    if (data.size() > 16384) throw ProtocolError("HTTP head too long");
    char buf[4096];
    const auto n = s.recv_some(reinterpret_cast<std::uint8_t*>(buf), sizeof buf, dl.remaining());
    if (!n) throw ProtocolError("timed out waiting for the HTTP head");
    if (*n == 0) throw ProtocolError("connection closed during the HTTP head");
    data.append(buf, *n);
  }
}

}  // namespace detail

/// Completes the server side of the opening handshake.
inline std::unique_ptr<WsFrameStream> accept_websocket(Socket s, int timeout_ms = 5000) {
  ByteBuffer leftover;
  const std::string head = detail::read_http_head(s, leftover, timeout_ms);
  std::string reply;
  try {
    reply = ws_handshake_response(head);
  } catch (const ProtocolError&) {
    const std::string bad = "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n";
    try {
      s.send_all(reinterpret_cast<const std::uint8_t*>(bad.data()), bad.size());
    } catch (const IoError&) {
    }
    throw;
  }
  s.send_all(reinterpret_cast<const std::uint8_t*>(reply.data()), reply.size());
  return std::make_unique<WsFrameStream>(std::move(s), WsFrameStream::Role::Server, leftover);
}

inline std::unique_ptr<WsFrameStream> connect_websocket(const Endpoint& e, int timeout_ms = 5000) {
  Socket s = connect_to(e);
  std::mt19937_64 rng(std::random_device{}());
  const std::string key = ws_random_key(rng);
  const std::string req = ws_handshake_request(e.str(), key);
  s.send_all(reinterpret_cast<const std::uint8_t*>(req.data()), req.size());
  ByteBuffer leftover;
  const std::string head = detail::read_http_head(s, leftover, timeout_ms);
  if (head.rfind("HTTP/1.1 101", 0) != 0) throw ProtocolError("websocket upgrade refused");
  const auto accept = http_header(head, "Sec-WebSocket-Accept");
  if (!accept || *accept != ws_accept_key(key)) throw ProtocolError("bad Sec-WebSocket-Accept");
  return std::make_unique<WsFrameStream>(std::move(s), WsFrameStream::Role::Client, leftover);
}

inline std::unique_ptr<TcpFrameStream> connect_tcp(const Endpoint& e) {
  return std::make_unique<TcpFrameStream>(connect_to(e));
}

}  // namespace portwin
