#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <ostream>

namespace portwin {

using Vec3 = std::array<double, 3>;
using Int3 = std::array<int, 3>;

inline constexpr int kDim = 3;

constexpr std::int64_t product(const Int3& v) {
  return std::int64_t{v[0]} * v[1] * v[2];
}

constexpr Int3 operator*(const Int3& a, const Int3& b) {
  return {a[0] * b[0], a[1] * b[1], a[2] * b[2]};
}

constexpr Int3 operator+(const Int3& a, const Int3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

inline Vec3 operator+(const Vec3& a, const Vec3& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

inline Vec3 operator-(const Vec3& a, const Vec3& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }

inline double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

/// Axis-aligned box, half-open for membership tests: [min, max).
struct Box {
  Vec3 min{0, 0, 0};
  Vec3 max{0, 0, 0};

  Vec3 extent() const { return max - min; }
  double volume() const {
    const Vec3 e = extent();
    return e[0] * e[1] * e[2];
  }
  Vec3 center() const { return 0.5 * (min + max); }

  bool contains(const Vec3& p) const {
    for (int a = 0; a < kDim; ++a) {
      if (!(p[a] >= min[a] && p[a] < max[a])) return false;
    }
    return true;
  }

  bool valid() const {
    for (int a = 0; a < kDim; ++a) {
      if (!(max[a] > min[a]) || !std::isfinite(min[a]) || !std::isfinite(max[a])) return false;
    }
    return true;
  }

  /// True when interiors overlap (touching faces do not count).
  bool overlaps(const Box& o) const {
    for (int a = 0; a < kDim; ++a) {
      if (!(min[a] < o.max[a] && o.min[a] < max[a])) return false;
    }
    return true;
  }

  Box intersect(const Box& o) const {
    Box r;
    for (int a = 0; a < kDim; ++a) {
      r.min[a] = std::max(min[a], o.min[a]);
      r.max[a] = std::min(max[a], o.max[a]);
    }
    return r;
  }

  friend bool operator==(const Box&, const Box&) = default;
};

inline std::ostream& operator<<(std::ostream& os, const Box& b) {
  return os << "[(" << b.min[0] << "," << b.min[1] << "," << b.min[2] << ")-(" << b.max[0]
            << "," << b.max[1] << "," << b.max[2] << ")]";
}

/// The six faces of a block, ordered axis-major, low side first.
enum class Face : std::uint8_t { West = 0, East = 1, South = 2, North = 3, Bottom = 4, Top = 5 };

inline constexpr std::array<Face, 6> kAllFaces{Face::West,  Face::East,   Face::South,
                                               Face::North, Face::Bottom, Face::Top};

constexpr int face_axis(Face f) { return static_cast<int>(f) / 2; }
constexpr bool face_is_high(Face f) { return (static_cast<int>(f) % 2) == 1; }
constexpr Face make_face(int axis, bool high) {
  return static_cast<Face>(axis * 2 + (high ? 1 : 0));
}
constexpr Face opposite(Face f) { return make_face(face_axis(f), !face_is_high(f)); }
constexpr int face_index(Face f) { return static_cast<int>(f); }

inline const char* face_name(Face f) {
  static constexpr const char* names[] = {"W", "E", "S", "N", "B", "T"};
  return names[face_index(f)];
}

}  // namespace portwin
