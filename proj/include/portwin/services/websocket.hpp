#pragma once

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <random>
#include <string>

#include "portwin/core/error.hpp"
#include "portwin/services/compress.hpp"

namespace portwin {

// RFC 6455 framing and opening handshake, binary messages only.

enum class WsOpcode : std::uint8_t { Continuation = 0, Text = 1, Binary = 2, Close = 8, Ping = 9, Pong = 10 };

inline constexpr const char* kWsGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
inline constexpr std::uint64_t kWsMaxMessage = (1ull << 30) + 64;

inline std::string base64_encode(const std::uint8_t* p, std::size_t n) {
  std::string out(4 * ((n + 2) / 3), '\0');
  const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), p, static_cast<int>(n));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

/// Sec-WebSocket-Accept value for a client key.
inline std::string ws_accept_key(const std::string& client_key) {
  const std::string s = client_key + kWsGuid;
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(s.data()), s.size(), digest);
  return base64_encode(digest, SHA_DIGEST_LENGTH);
}

inline ByteBuffer ws_encode(WsOpcode op, const std::uint8_t* p, std::size_t n, bool mask,
                            std::uint32_t mask_key = 0) {
  ByteBuffer out;
  out.reserve(n + 14);
  out.push_back(static_cast<std::uint8_t>(0x80 | static_cast<std::uint8_t>(op)));
  const std::uint8_t m = mask ? 0x80 : 0;
  if (n < 126) {
    out.push_back(static_cast<std::uint8_t>(m | n));
  } else if (n <= 0xffff) {
    out.push_back(m | 126);
    out.push_back(static_cast<std::uint8_t>(n >> 8));
    out.push_back(static_cast<std::uint8_t>(n));
  } else {
    out.push_back(m | 127);
    for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(n) >> s));
  }
  std::uint8_t key[4] = {static_cast<std::uint8_t>(mask_key >> 24), static_cast<std::uint8_t>(mask_key >> 16),
                         static_cast<std::uint8_t>(mask_key >> 8), static_cast<std::uint8_t>(mask_key)};
  if (mask) out.insert(out.end(), key, key + 4);
  const std::size_t base = out.size();
  out.insert(out.end(), p, p + n);
  if (mask) {
    for (std::size_t i = 0; i < n; ++i) out[base + i] ^= key[i % 4];
  }
  return out;
}

inline ByteBuffer ws_encode(WsOpcode op, const ByteBuffer& payload, bool mask, std::uint32_t mask_key = 0) {
  return ws_encode(op, payload.data(), payload.size(), mask, mask_key);
}

struct WsMessage {
  WsOpcode opcode = WsOpcode::Binary;
  ByteBuffer payload;
};

/// Incremental frame parser that reassembles fragmented messages. Control
/// frames are returned as they arrive.
class WsDecoder {
 public:
  /// `expect_masked`: a server requires masked client frames, a client
  /// requires unmasked server frames.
  explicit WsDecoder(bool expect_masked) : expect_masked_(expect_masked) {}

  void feed(const std::uint8_t* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }

  std::optional<WsMessage> next() {
    for (;;) {
      const std::size_t avail = buf_.size() - pos_;
      if (avail < 2) return std::nullopt;
      const std::uint8_t* h = buf_.data() + pos_;
      const bool fin = (h[0] & 0x80) != 0;
      if ((h[0] & 0x70) != 0) throw ProtocolError("websocket reserved bits set");
      const auto op = static_cast<WsOpcode>(h[0] & 0x0f);
      const bool masked = (h[1] & 0x80) != 0;
      if (masked != expect_masked_) throw ProtocolError("websocket masking rule violated");
      std::uint64_t len = h[1] & 0x7f;
      std::size_t hdr = 2;
      if (len == 126) {
        if (avail < 4) return std::nullopt;
        len = (std::uint64_t{h[2]} << 8) | h[3];
        hdr = 4;
      } else if (len == 127) {
        if (avail < 10) return std::nullopt;
        len = 0;
        for (int i = 0; i < 8; ++i) len = (len << 8) | h[2 + i];
        hdr = 10;
      }
      if (len > kWsMaxMessage) throw ProtocolError("websocket frame too large");
      const std::size_t mask_at = hdr;
      if (masked) hdr += 4;
      if (avail < hdr + len) return std::nullopt;
      ByteBuffer payload(h + hdr, h + hdr + len);
      if (masked) {
        for (std::size_t i = 0; i < payload.size(); ++i) payload[i] ^= h[mask_at + i % 4];
      }
      pos_ += hdr + static_cast<std::size_t>(len);
      compact();

      const auto code = static_cast<std::uint8_t>(op);
      if (code >= 8) {
        if (code > 10 || !fin || len > 125) throw ProtocolError("invalid websocket control frame");
        return WsMessage{op, std::move(payload)};
      }
      if (op == WsOpcode::Continuation) {
        if (!assembling_) throw ProtocolError("websocket continuation without a started message");
      } else {
        if (code > 2) throw ProtocolError("unknown websocket opcode");
        if (assembling_) throw ProtocolError("websocket message interleaved with a new one");
        assembling_ = true;
        partial_op_ = op;
        partial_.clear();
      }
      if (partial_.size() + payload.size() > kWsMaxMessage) throw ProtocolError("websocket message too large");
      partial_.insert(partial_.end(), payload.begin(), payload.end());
      if (fin) {
        assembling_ = false;
        return WsMessage{partial_op_, std::move(partial_)};
      }
    }
  }

 private:
  void compact() {
    if (pos_ == buf_.size()) {
      buf_.clear();
      pos_ = 0;
    } else if (pos_ > (1u << 20)) {
      buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
      pos_ = 0;
    }
  }

  bool expect_masked_;
  ByteBuffer buf_;
  std::size_t pos_ = 0;
  bool assembling_ = false;
  WsOpcode partial_op_ = WsOpcode::Binary;
  ByteBuffer partial_;
};

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::string trim_ws(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace detail

/// Value of an HTTP header (case-insensitive name) in a request or
/// response head, if present.
inline std::optional<std::string> http_header(const std::string& head, const std::string& name) {
  const std::string want = detail::lower(name);
  std::size_t pos = head.find("\r\n");
  while (pos != std::string::npos && pos + 2 < head.size()) {
    const std::size_t start = pos + 2;
    const std::size_t end = head.find("\r\n", start);
    const std::string line = head.substr(start, end == std::string::npos ? std::string::npos : end - start);
    const auto colon = line.find(':');
    if (colon != std::string::npos && detail::lower(detail::trim_ws(line.substr(0, colon))) == want) {
      return detail::trim_ws(line.substr(colon + 1));
    }
    pos = end;
  }
  return std::nullopt;
}

/// Server reply to an upgrade request head; throws ProtocolError when the
/// head is not a WebSocket upgrade.
inline std::string ws_handshake_response(const std::string& head) {
  if (head.rfind("GET ", 0) != 0) throw ProtocolError("websocket handshake must be a GET request");
  const auto upgrade = http_header(head, "Upgrade");
  if (!upgrade || detail::lower(*upgrade) != "websocket") throw ProtocolError("missing Upgrade: websocket header");
  const auto key = http_header(head, "Sec-WebSocket-Key");
  if (!key || key->empty()) throw ProtocolError("missing Sec-WebSocket-Key header");
  return "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
         "Sec-WebSocket-Accept: " +
         ws_accept_key(*key) + "\r\n\r\n";
}

inline std::string ws_random_key(std::mt19937_64& rng) {
  std::uint8_t raw[16];
  for (auto& b : raw) b = static_cast<std::uint8_t>(rng());
  return base64_encode(raw, sizeof raw);
}

inline std::string ws_handshake_request(const std::string& host, const std::string& key) {
  return "GET / HTTP/1.1\r\nHost: " + host +
         "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Version: 13\r\n"
         "Sec-WebSocket-Key: " +
         key + "\r\n\r\n";
}

}  // namespace portwin
