#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <utility>

#include "portwin/core/error.hpp"

namespace portwin {

/// 64-bit unique grid identifier: creating rank in the upper 32 bits, the
/// rank-local grid id in the lower 32 bits.
struct Uid {
  std::uint64_t packed = 0;

  constexpr std::uint32_t rank() const { return static_cast<std::uint32_t>(packed >> 32); }
  constexpr std::uint32_t local_id() const { return static_cast<std::uint32_t>(packed); }

  friend constexpr auto operator<=>(const Uid&, const Uid&) = default;
};

inline constexpr std::int64_t kMaxUidPart = 0xFFFFFFFFLL;

inline Uid uid_encode(std::int64_t rank, std::int64_t local_id) {
  if (rank < 0 || rank > kMaxUidPart || local_id < 0 || local_id > kMaxUidPart) {
    throw EncodingError("uid component out of 32-bit range: rank=" + std::to_string(rank) +
                        " local_id=" + std::to_string(local_id));
  }
  return Uid{(static_cast<std::uint64_t>(rank) << 32) | static_cast<std::uint64_t>(local_id)};
}

inline std::pair<std::uint32_t, std::uint32_t> uid_decode(Uid uid) {
  return {uid.rank(), uid.local_id()};
}

inline std::ostream& operator<<(std::ostream& os, Uid u) {
  return os << u.rank() << ":" << u.local_id();
}

}  // namespace portwin

template <>
struct std::hash<portwin::Uid> {
  std::size_t operator()(const portwin::Uid& u) const noexcept {
    return std::hash<std::uint64_t>{}(u.packed);
  }
};
