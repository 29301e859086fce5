#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "portwin/core/bytes.hpp"
#include "portwin/core/error.hpp"
#include "portwin/core/geometry.hpp"
#include "portwin/services/compress.hpp"

namespace portwin {

// Frame: "SWIN" | version u8 | type u8 | payload length u32 LE | payload.
inline constexpr std::array<std::uint8_t, 4> kFrameMagic{'S', 'W', 'I', 'N'};
inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kFrameHeaderBytes = 10;
inline constexpr std::uint32_t kMaxFramePayload = 1u << 30;

enum class FrameType : std::uint8_t {
  WindowRequest = 1,
  WindowResponse = 2,
  Steering = 3,
  Ack = 4,
  Status = 5,
};

enum FieldMask : std::uint8_t {
  kSelUx = 1,
  kSelUy = 2,
  kSelUz = 4,
  kSelP = 8,
  kSelSpeed = 16,
  kSelFlags = 32,
  kSelAll = 63,
};

inline int selected_field_count(std::uint8_t mask) {
  int n = 0;
  for (int b = 0; b < 6; ++b) n += (mask >> b) & 1;
  return n;
}

/// Payload values are 32-bit floats.
inline constexpr int kBytesPerValue = 4;

struct Frame {
  FrameType type = FrameType::Status;
  ByteBuffer payload;
};

inline ByteBuffer encode_frame(FrameType type, const ByteBuffer& payload) {
  if (payload.size() > kMaxFramePayload) throw ProtocolError("frame payload too large");
  ByteWriter w;
  w.bytes(kFrameMagic.data(), kFrameMagic.size());
  w.u8(kProtocolVersion);
  w.u8(static_cast<std::uint8_t>(type));
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.bytes(payload.data(), payload.size());
  return w.take();
}

/// Incremental frame splitter for a byte stream.
class FrameDecoder {
 public:
  void feed(const std::uint8_t* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  void feed(const ByteBuffer& b) { feed(b.data(), b.size()); }

  /// Next complete frame, or nothing when more bytes are needed. A bad
  /// header raises ProtocolError; the stream cannot be resynchronised.
  std::optional<Frame> next() {
    if (buf_.size() - pos_ < kFrameHeaderBytes) return std::nullopt;
    const std::uint8_t* h = buf_.data() + pos_;
    if (std::memcmp(h, kFrameMagic.data(), 4) != 0) throw ProtocolError("bad frame magic");
    if (h[4] != kProtocolVersion) throw ProtocolError("unsupported protocol version " + std::to_string(h[4]));
    const std::uint8_t type = h[5];
    if (type < 1 || type > 5) throw ProtocolError("unknown frame type " + std::to_string(type));
    std::uint32_t len;
    std::memcpy(&len, h + 6, 4);
    if (len > kMaxFramePayload) throw ProtocolError("frame payload too large");
    if (buf_.size() - pos_ < kFrameHeaderBytes + len) return std::nullopt;
    Frame f;
    f.type = static_cast<FrameType>(type);
    f.payload.assign(h + kFrameHeaderBytes, h + kFrameHeaderBytes + len);
    pos_ += kFrameHeaderBytes + len;
    if (pos_ == buf_.size()) {
      buf_.clear();
      pos_ = 0;
    } else if (pos_ > (1u << 20)) {
      buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
      pos_ = 0;
    }
    return f;
  }

  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  ByteBuffer buf_;
  std::size_t pos_ = 0;
};

// ---- messages -------------------------------------------------------------

struct WindowRequest {
  std::uint64_t request_id = 0;
  std::uint64_t client_id = 0;
  Box window;
  std::uint64_t max_bytes = 0;
  std::uint8_t fields = kSelAll;

  friend bool operator==(const WindowRequest&, const WindowRequest&) = default;
};

enum class ResponseStatus : std::uint8_t { Ok = 0, Empty = 1 };

struct BlockRecord {
  std::uint64_t uid = 0;
  Int3 coords{0, 0, 0};  // block position within its depth
  Int3 first{0, 0, 0};   // first selected local cell
  Int3 count{0, 0, 0};   // selected cells per axis

  friend bool operator==(const BlockRecord&, const BlockRecord&) = default;
};

struct WindowResponse {
  std::uint64_t request_id = 0;
  ResponseStatus status = ResponseStatus::Ok;
  std::int32_t depth = 0;
  Int3 stride{1, 1, 1};
  std::uint64_t cell_count = 0;
  std::int64_t step = 0;
  std::uint64_t uncompressed_size = 0;
  std::uint8_t fields = 0;
  std::vector<BlockRecord> blocks;
  ByteBuffer compressed;

  friend bool operator==(const WindowResponse&, const WindowResponse&) = default;
};

// Fixed response bytes: id, status, depth, stride, cells, step, size,
// fields, block count, compressed length.
inline constexpr std::uint64_t kResponseFixedBytes = 8 + 1 + 4 + 12 + 8 + 8 + 8 + 1 + 4 + 4;
inline constexpr std::uint64_t kBlockRecordBytes = 8 + 12 + 12 + 12;

enum class SteeringCode : std::uint8_t { SetInflow = 0, SetViscosity = 1, RefineRegion = 2, Pause = 3, Resume = 4 };

struct SteeringMessage {
  std::uint64_t request_id = 0;
  std::uint64_t client_id = 0;
  SteeringCode kind = SteeringCode::Pause;
  Vec3 vector{0, 0, 0};
  double scalar = 0;
  Box box;

  friend bool operator==(const SteeringMessage&, const SteeringMessage&) = default;
};

enum class AckStatus : std::uint8_t { Accepted = 0, Rejected = 1, ProtocolError = 2, Empty = 3 };

struct AckMessage {
  std::uint64_t request_id = 0;
  AckStatus status = AckStatus::Accepted;
  std::int64_t effective_step = 0;
  std::string message;

  friend bool operator==(const AckMessage&, const AckMessage&) = default;
};

struct StatusMessage {
  std::uint64_t request_id = 0;
  std::uint64_t session_id = 0;
  Box domain;
  std::vector<std::int32_t> depths;  // populated depths
  std::int64_t step = 0;
  bool paused = false;
  bool live = true;  // false when serving a stored snapshot

  friend bool operator==(const StatusMessage&, const StatusMessage&) = default;
};

inline ByteBuffer encode(const WindowRequest& m) {
  ByteWriter w;
  w.u64(m.request_id);
  w.u64(m.client_id);
  w.box(m.window);
  w.u64(m.max_bytes);
  w.u8(m.fields);
  return encode_frame(FrameType::WindowRequest, w.take());
}

inline ByteBuffer encode_response_payload(const WindowResponse& m) {
  ByteWriter w;
  w.u64(m.request_id);
  w.u8(static_cast<std::uint8_t>(m.status));
  w.i32(m.depth);
  for (int s : m.stride) w.i32(s);
  w.u64(m.cell_count);
  w.i64(m.step);
  w.u64(m.uncompressed_size);
  w.u8(m.fields);
  w.u32(static_cast<std::uint32_t>(m.blocks.size()));
  for (const BlockRecord& b : m.blocks) {
    w.u64(b.uid);
    for (int v : b.coords) w.i32(v);
    for (int v : b.first) w.i32(v);
    for (int v : b.count) w.i32(v);
  }
  w.u32(static_cast<std::uint32_t>(m.compressed.size()));
  w.bytes(m.compressed.data(), m.compressed.size());
  return w.take();
}

inline ByteBuffer encode(const WindowResponse& m) {
  return encode_frame(FrameType::WindowResponse, encode_response_payload(m));
}

inline ByteBuffer encode(const SteeringMessage& m) {
  ByteWriter w;
  w.u64(m.request_id);
  w.u64(m.client_id);
  w.u8(static_cast<std::uint8_t>(m.kind));
  w.vec3(m.vector);
  w.f64(m.scalar);
  w.box(m.box);
  return encode_frame(FrameType::Steering, w.take());
}

inline ByteBuffer encode(const AckMessage& m) {
  ByteWriter w;
  w.u64(m.request_id);
  w.u8(static_cast<std::uint8_t>(m.status));
  w.i64(m.effective_step);
  w.str(m.message);
  return encode_frame(FrameType::Ack, w.take());
}

inline ByteBuffer encode(const StatusMessage& m) {
  ByteWriter w;
  w.u64(m.request_id);
  w.u64(m.session_id);
  w.box(m.domain);
  w.u32(static_cast<std::uint32_t>(m.depths.size()));
  for (auto d : m.depths) w.i32(d);
  w.i64(m.step);
  w.u8(m.paused ? 1 : 0);
  w.u8(m.live ? 1 : 0);
  return encode_frame(FrameType::Status, w.take());
}

/// Client-side status query: just a request id.
inline ByteBuffer encode_status_query(std::uint64_t request_id) {
  ByteWriter w;
  w.u64(request_id);
  return encode_frame(FrameType::Status, w.take());
}

/// Request id of a payload if at least eight bytes are present.
inline std::uint64_t peek_request_id(const ByteBuffer& payload) {
  if (payload.size() < 8) return 0;
  std::uint64_t id;
  std::memcpy(&id, payload.data(), 8);
  return id;
}

inline WindowRequest decode_window_request(const ByteBuffer& p) {
  ByteReader r(p);
  WindowRequest m;
  m.request_id = r.u64();
  m.client_id = r.u64();
  m.window = r.box();
  m.max_bytes = r.u64();
  m.fields = r.u8();
  r.expect_end();
  return m;
}

inline WindowResponse decode_window_response(const ByteBuffer& p) {
  ByteReader r(p);
  WindowResponse m;
  m.request_id = r.u64();
  const std::uint8_t st = r.u8();
  if (st > 1) throw ProtocolError("bad response status");
  m.status = static_cast<ResponseStatus>(st);
  m.depth = r.i32();
  for (int& s : m.stride) s = r.i32();
  m.cell_count = r.u64();
  m.step = r.i64();
  m.uncompressed_size = r.u64();
  m.fields = r.u8();
  const std::uint32_t nb = r.u32();
  if (nb > r.remaining() / kBlockRecordBytes) throw ProtocolError("block count exceeds payload");
  m.blocks.resize(nb);
  for (BlockRecord& b : m.blocks) {
    b.uid = r.u64();
    for (int& v : b.coords) v = r.i32();
    for (int& v : b.first) v = r.i32();
    for (int& v : b.count) v = r.i32();
  }
  const std::uint32_t nc = r.u32();
  const std::uint8_t* c = r.bytes(nc);
  m.compressed.assign(c, c + nc);
  r.expect_end();
  return m;
}

inline SteeringMessage decode_steering(const ByteBuffer& p) {
  ByteReader r(p);
  SteeringMessage m;
  m.request_id = r.u64();
  m.client_id = r.u64();
  const std::uint8_t k = r.u8();
  if (k > 4) throw ProtocolError("unknown steering kind " + std::to_string(k));
  m.kind = static_cast<SteeringCode>(k);
  m.vector = r.vec3();
  m.scalar = r.f64();
  m.box = r.box();
  r.expect_end();
  return m;
}

inline AckMessage decode_ack(const ByteBuffer& p) {
  ByteReader r(p);
  AckMessage m;
  m.request_id = r.u64();
  const std::uint8_t st = r.u8();
  if (st > 3) throw ProtocolError("bad ack status");
  m.status = static_cast<AckStatus>(st);
  m.effective_step = r.i64();
  m.message = r.str();
  r.expect_end();
  return m;
}

inline StatusMessage decode_status(const ByteBuffer& p) {
  ByteReader r(p);
  StatusMessage m;
  m.request_id = r.u64();
  m.session_id = r.u64();
  m.domain = r.box();
  const std::uint32_t nd = r.u32();
  if (nd > r.remaining() / 4) throw ProtocolError("depth count exceeds payload");
  m.depths.resize(nd);
  for (auto& d : m.depths) d = r.i32();
  m.step = r.i64();
  m.paused = r.u8() != 0;
  m.live = r.u8() != 0;
  r.expect_end();
  return m;
}

/// Cell values of a response, decompressed and converted back to floats.
/// Layout: per block record, per selected field (bit order), x fastest.
inline std::vector<float> response_values(const WindowResponse& m) {
  const ByteBuffer raw = decompress_stream(m.compressed.data(), m.compressed.size(), m.uncompressed_size);
  if (raw.size() != m.uncompressed_size || raw.size() % 4 != 0) {
    throw IntegrityError("payload size differs from the announced size");
  }
  std::vector<float> v(raw.size() / 4);
  if (!raw.empty()) std::memcpy(v.data(), raw.data(), raw.size());
  return v;
}

}  // namespace portwin
