#pragma once

#include <memory>
#include <optional>
#include <variant>

#include "portwin/services/protocol.hpp"
#include "portwin/services/stream.hpp"

namespace portwin {

using WindowReply = std::variant<WindowResponse, AckMessage>;

/// Blocking client of the window protocol over TCP or WebSocket.
class SwinClient {
 public:
  static SwinClient connect(const Endpoint& e, bool websocket = false, int timeout_ms = 5000) {
    std::unique_ptr<FrameStream> s;
    if (websocket) {
      s = connect_websocket(e, timeout_ms);
    } else {
      s = connect_tcp(e);
    }
    SwinClient c(std::move(s));
    const Frame f = c.receive(timeout_ms);
    if (f.type == FrameType::Ack) throw ProtocolError("connection refused: " + decode_ack(f.payload).message);
    if (f.type != FrameType::Status) throw ProtocolError("expected a status frame after connecting");
    c.hello_ = decode_status(f.payload);
    return c;
  }

  const StatusMessage& hello() const { return hello_; }
  std::uint64_t session() const { return hello_.session_id; }
  FrameStream& stream() { return *stream_; }

  void send(const ByteBuffer& frame) { stream_->write(frame); }

  Frame receive(int timeout_ms = 30000) {
    auto f = stream_->read(timeout_ms);
    if (!f) throw IoError(stream_->closed() ? "connection closed by the collector" : "timed out waiting for a reply");
    return std::move(*f);
  }

  WindowReply request_window(const Box& window, std::uint64_t max_bytes, std::uint8_t fields = kSelAll,
                             int timeout_ms = 30000) {
    WindowRequest r;
    r.request_id = next_id_++;
    r.client_id = session();
    r.window = window;
    r.max_bytes = max_bytes;
    r.fields = fields;
    send(encode(r));
    const Frame f = receive(timeout_ms);
    if (f.type == FrameType::WindowResponse) return decode_window_response(f.payload);
    if (f.type == FrameType::Ack) return decode_ack(f.payload);
    throw ProtocolError("unexpected reply to a window request");
  }

  AckMessage steer(SteeringMessage m, int timeout_ms = 30000) {
    m.request_id = next_id_++;
    m.client_id = session();
    send(encode(m));
    const Frame f = receive(timeout_ms);
    if (f.type != FrameType::Ack) throw ProtocolError("unexpected reply to a steering request");
    return decode_ack(f.payload);
  }

  StatusMessage status(int timeout_ms = 30000) {
    send(encode_status_query(next_id_++));
    const Frame f = receive(timeout_ms);
    if (f.type != FrameType::Status) throw ProtocolError("unexpected reply to a status query");
    return decode_status(f.payload);
  }

  std::uint64_t next_request_id() const { return next_id_; }

  void close() {
    if (auto* ws = dynamic_cast<WsFrameStream*>(stream_.get())) {
      try {
        ws->close_handshake();
      } catch (const Error&) {
      }
    }
    stream_->shutdown();
  }

 private:
  explicit SwinClient(std::unique_ptr<FrameStream> s) : stream_(std::move(s)) {}

  std::unique_ptr<FrameStream> stream_;
  StatusMessage hello_;
  std::uint64_t next_id_ = 1;
};

}  // namespace portwin
