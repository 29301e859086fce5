#pragma once

#include <cstdint>
#include <string>

#include "portwin/core/error.hpp"
#include "portwin/core/geometry.hpp"

namespace portwin {

inline constexpr int kMortonBitsPerAxis = 21;

namespace detail {

// Spreads the low 21 bits of v so that bit i lands on bit 3i.
constexpr std::uint64_t spread_bits3(std::uint64_t v) {
  v &= 0x1FFFFFULL;
  v = (v | (v << 32)) & 0x1F00000000FFFFULL;
  v = (v | (v << 16)) & 0x1F0000FF0000FFULL;
  v = (v | (v << 8)) & 0x100F00F00F00F00FULL;
  v = (v | (v << 4)) & 0x10C30C30C30C30C3ULL;
  v = (v | (v << 2)) & 0x1249249249249249ULL;
  return v;
}

}  // namespace detail

/// Z-order (Lebesgue curve) key: bit 3i <- x_i, 3i+1 <- y_i, 3i+2 <- z_i.
inline std::uint64_t morton_key(const Int3& c) {
  for (int a = 0; a < kDim; ++a) {
    if (c[a] < 0 || c[a] >= (1 << kMortonBitsPerAxis)) {
      throw EncodingError("morton coordinate out of range: " + std::to_string(c[a]));
    }
  }
  return detail::spread_bits3(static_cast<std::uint64_t>(c[0])) |
         (detail::spread_bits3(static_cast<std::uint64_t>(c[1])) << 1) |
         (detail::spread_bits3(static_cast<std::uint64_t>(c[2])) << 2);
}

}  // namespace portwin
