#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "portwin/core/error.hpp"
#include "portwin/grid/hierarchy.hpp"
#include "portwin/grid/morton.hpp"

namespace portwin {

/// Assignment of blocks to workers along the Lebesgue (Z-order) curve.
struct Partition {
  std::map<Uid, int> assignment;
  std::vector<std::vector<Uid>> blocks;  // per worker, in curve order

  int worker_of(Uid uid) const {
    auto it = assignment.find(uid);
    if (it == assignment.end()) throw LookupError("uid not in partition");
    return it->second;
  }
};

/// Curve position of a block: depth-major, Morton key minor.
inline std::pair<int, std::uint64_t> curve_position(const LogicalGrid& g) {
  return {g.depth, morton_key(g.block_coords)};
}

/// Splits `uids` in curve order into `n_workers` contiguous chunks whose sizes
/// differ by at most one (the larger chunks come first).
inline Partition partition_blocks(const GridHierarchy& h, std::vector<Uid> uids, int n_workers) {
  if (n_workers < 1) throw PartitionError("n_workers must be >= 1");
  if (static_cast<std::size_t>(n_workers) > uids.size()) {
    throw PartitionError("more workers (" + std::to_string(n_workers) + ") than blocks (" +
                         std::to_string(uids.size()) + ")");
  }
  std::sort(uids.begin(), uids.end(), [&](Uid a, Uid b) {
    return std::make_tuple(curve_position(h.grid(a)), a) <
           std::make_tuple(curve_position(h.grid(b)), b);
  });
  Partition p;
  p.blocks.resize(static_cast<std::size_t>(n_workers));
  const std::size_t n = uids.size();
  const std::size_t base = n / n_workers;
  const std::size_t extra = n % n_workers;
  std::size_t pos = 0;
  for (int w = 0; w < n_workers; ++w) {
    const std::size_t len = base + (static_cast<std::size_t>(w) < extra ? 1 : 0);
    for (std::size_t i = 0; i < len; ++i, ++pos) {
      p.blocks[w].push_back(uids[pos]);
      p.assignment[uids[pos]] = w;
    }
  }
  return p;
}

/// Partition of the leaf blocks.
inline Partition partition_morton(const GridHierarchy& h, int n_workers) {
  return partition_blocks(h, h.leaves(), n_workers);
}

}  // namespace portwin
