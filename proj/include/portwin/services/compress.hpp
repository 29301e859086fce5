#pragma once

#include <zlib.h>

#include <cstdint>
#include <string>
#include <vector>

#include "portwin/core/bytes.hpp"
#include "portwin/core/error.hpp"

namespace portwin {

/// Raw DEFLATE (RFC 1951, no zlib or gzip wrapper).
inline ByteBuffer compress_stream(const std::uint8_t* data, std::size_t size, int level = Z_DEFAULT_COMPRESSION) {
  z_stream s{};
  if (deflateInit2(&s, level, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw EncodingError("deflate initialisation failed");
  }
  ByteBuffer out(deflateBound(&s, static_cast<uLong>(size)));
  s.next_in = const_cast<Bytef*>(data);
  s.avail_in = static_cast<uInt>(size);
  s.next_out = out.data();
  s.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&s, Z_FINISH);
  const std::size_t produced = out.size() - s.avail_out;
  deflateEnd(&s);
  if (rc != Z_STREAM_END) throw EncodingError("deflate did not finish");
  out.resize(produced);
  return out;
}

inline ByteBuffer compress_stream(const ByteBuffer& in) { return compress_stream(in.data(), in.size()); }

/// Inverse of compress_stream. A truncated, corrupt or over-long stream
/// raises IntegrityError; `expected_size` bounds the output when given.
inline ByteBuffer decompress_stream(const std::uint8_t* data, std::size_t size,
                                    std::size_t expected_size = static_cast<std::size_t>(-1)) {
  z_stream s{};
  if (inflateInit2(&s, -15) != Z_OK) throw EncodingError("inflate initialisation failed");
  ByteBuffer out;
  s.next_in = const_cast<Bytef*>(data);
  s.avail_in = static_cast<uInt>(size);
  std::uint8_t chunk[1 << 15];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    s.next_out = chunk;
    s.avail_out = sizeof chunk;
    rc = inflate(&s, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&s);
      throw IntegrityError(std::string("corrupt DEFLATE stream: ") + (s.msg ? s.msg : "truncated"));
    }
    out.insert(out.end(), chunk, chunk + (sizeof chunk - s.avail_out));
    if (out.size() > expected_size) {
      inflateEnd(&s);
      throw IntegrityError("DEFLATE stream longer than announced");
    }
    if (rc == Z_OK && s.avail_in == 0 && s.avail_out != 0) {
      inflateEnd(&s);
      throw IntegrityError("truncated DEFLATE stream");
    }
  }
  const bool trailing = s.avail_in != 0;
  inflateEnd(&s);
  if (trailing) throw IntegrityError("trailing bytes after DEFLATE stream");
  return out;
}

inline ByteBuffer decompress_stream(const ByteBuffer& in) { return decompress_stream(in.data(), in.size()); }

/// Upper bound of compress_stream's output size for `n` input bytes.
inline std::uint64_t compressed_size_bound(std::uint64_t n) {
  return n + (n >> 12) + (n >> 14) + (n >> 25) + 13;
}

}  // namespace portwin
