#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "portwin/core/error.hpp"
#include "portwin/core/geometry.hpp"

namespace portwin {

using ByteBuffer = std::vector<std::uint8_t>;

/// Little-endian serialisation helpers.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { put(&v, 4); }
  void u64(std::uint64_t v) { put(&v, 8); }
  void i32(std::int32_t v) { put(&v, 4); }
  void i64(std::int64_t v) { put(&v, 8); }
  void f32(float v) { put(&v, 4); }
  void f64(double v) { put(&v, 8); }
  void vec3(const Vec3& v) {
    for (double x : v) f64(x);
  }
  void box(const Box& b) {
    vec3(b.min);
    vec3(b.max);
  }
  void bytes(const std::uint8_t* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(reinterpret_cast<const std::uint8_t*>(s.data()), s.size());
  }
  ByteBuffer& buffer() { return buf_; }
  ByteBuffer take() { return std::move(buf_); }

 private:
  void put(const void* p, std::size_t n) {
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  ByteBuffer buf_;
};

/// Little-endian reader; running past the end or leaving bytes unread
/// raises `Err`.
template <typename Err>
class BasicByteReader {
 public:
  BasicByteReader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
  explicit BasicByteReader(const ByteBuffer& b) : BasicByteReader(b.data(), b.size()) {}

  std::uint8_t u8() { return get<std::uint8_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  std::int32_t i32() { return get<std::int32_t>(); }
  std::int64_t i64() { return get<std::int64_t>(); }
  float f32() { return get<float>(); }
  double f64() { return get<double>(); }
  Vec3 vec3() {
    Vec3 v;
    for (double& x : v) x = f64();
    return v;
  }
  Box box() {
    Box b;
    b.min = vec3();
    b.max = vec3();
    return b;
  }
  const std::uint8_t* bytes(std::size_t n) {
    need(n);
    const std::uint8_t* p = p_ + pos_;
    pos_ += n;
    return p;
  }
  std::string str() {
    const std::uint32_t n = u32();
    const auto* p = bytes(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  std::size_t remaining() const { return n_ - pos_; }
  void expect_end() const {
    if (pos_ != n_) throw Err("trailing bytes after the encoded data");
  }

 private:
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, p_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void need(std::size_t n) const {
    if (n > n_ - pos_) throw Err("encoded data too short");
  }
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

using ByteReader = BasicByteReader<ProtocolError>;

}  // namespace portwin
