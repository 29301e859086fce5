#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "portwin/grid/hierarchy.hpp"
#include "portwin/runtime/simulation.hpp"
#include "portwin/services/window.hpp"

namespace portwin::testing_support {

// 20^3 cells per block, 16 blocks at depth 1, factor 8 per further depth.
inline GridConfig reference_window_config() {
  GridConfig gc;
  gc.domain_min = {0, 0, 0};
  gc.domain_max = {2.0, 1.0, 1.0};
  gc.root_refine = {4, 2, 2};
  gc.sub_refine = {2, 2, 2};
  gc.block_size = {20, 20, 20};
  gc.max_depth = 3;
  return gc;
}

inline GridConfig small_channel_config(Int3 root = {2, 1, 1}, Int3 block = {8, 8, 8}, int max_depth = 2) {
  GridConfig gc;
  gc.domain_min = {0, 0, 0};
  gc.domain_max = {2.0, 1.0, 1.0};
  gc.root_refine = root;
  gc.sub_refine = {2, 2, 2};
  gc.block_size = block;
  gc.max_depth = max_depth;
  return gc;
}

inline FluidProps unit_fluid(double nu = 0.05) {
  FluidProps p;
  p.nu = nu;
  p.rho = 1.0;
  p.body_force = {0, 0, 0};
  return p;
}

/// Brute-force window accounting from global cell indices, independent of
/// the block-wise selection code.
struct OracleCount {
  std::int64_t cells = 0;
  std::int64_t blocks = 0;
  bool covered = true;
};

inline std::vector<int> centres_in(double lo, double hi, double dmin, double h, int n) {
  std::vector<int> out;
  for (int g = 0; g < n; ++g) {
    const double c = dmin + (g + 0.5) * h;
    if (c >= lo && c < hi) out.push_back(g);
  }
  return out;
}

inline OracleCount oracle_count(const GridHierarchy& h, const Box& w, int depth, int stride) {
  const GridConfig& cfg = h.config();
  const Int3 res = cfg.resolution_at(depth);
  const Vec3 hc = cfg.cell_size_at(depth);
  std::array<std::vector<int>, 3> sel;
  std::array<std::set<int>, 3> blk;
  OracleCount o;
  o.cells = 1;
  o.blocks = 1;
  for (int a = 0; a < 3; ++a) {
    const std::vector<int> all = centres_in(w.min[a], w.max[a], cfg.domain_min[a], hc[a], res[a]);
    for (std::size_t m = 0; m < all.size(); m += static_cast<std::size_t>(stride)) sel[a].push_back(all[m]);
    for (int g : sel[a]) blk[a].insert(g / cfg.block_size[a]);
    o.cells *= static_cast<std::int64_t>(sel[a].size());
    o.blocks *= static_cast<std::int64_t>(blk[a].size());
  }
  if (o.cells == 0) {
    o.blocks = 0;
    return o;
  }
  for (int x : blk[0])
    for (int y : blk[1])
      for (int z : blk[2]) {
        if (!h.find(depth, Int3{x, y, z})) o.covered = false;
      }
  return o;
}

inline std::uint64_t oracle_bytes(const OracleCount& o, std::uint64_t bpc) {
  const std::uint64_t raw = static_cast<std::uint64_t>(o.cells) * bpc;
  return raw + header_bytes(static_cast<std::uint64_t>(o.blocks), raw);
}

inline bool oracle_fits(const GridHierarchy& h, const Box& w, int depth, int stride, std::uint64_t budget,
                        std::uint64_t bpc) {
  const OracleCount o = oracle_count(h, w, depth, stride);
  return o.cells > 0 && o.covered && oracle_bytes(o, bpc) <= budget;
}

/// Empty string when `sel` is the optimal feasible choice, otherwise why not.
inline std::string check_optimal(const GridHierarchy& h, const Box& w, std::uint64_t budget, std::uint64_t bpc,
                                 const LevelSelection& sel) {
  const OracleCount o = oracle_count(h, w, sel.depth, sel.stride);
  if (o.cells != sel.cells) return "cell count differs from oracle";
  if (sel.cells == 0) {
    for (int d = 0; d < h.depth_count(); ++d) {
      const OracleCount c = oracle_count(h, w, d, 1);
      if (c.cells != 0 && c.covered) return "empty selection although cells exist";
    }
    return "";
  }
  if (static_cast<std::int64_t>(sel.blocks.size()) != o.blocks) return "block count differs from oracle";
  if (!o.covered) return "selected depth not populated";
  if (oracle_bytes(o, bpc) > budget) return "selection exceeds budget";
  if (sel.total_bytes(bpc) != oracle_bytes(o, bpc)) return "byte accounting differs from oracle";
  for (int d = sel.stride == 1 ? sel.depth + 1 : 0; d < h.depth_count(); ++d) {
    if (oracle_fits(h, w, d, 1, budget, bpc)) return "depth " + std::to_string(d) + " also fits";
  }
  if (sel.stride > 1) {
    for (int d = 0; d < sel.depth; ++d) {
      const OracleCount c = oracle_count(h, w, d, 1);
      if (c.cells > 0 && c.covered) return "strided selection not on the shallowest depth holding cells";
    }
    if (sel.stride > 2 && oracle_fits(h, w, sel.depth, sel.stride / 2, budget, bpc)) return "smaller stride also fits";
  }
  return "";
}

}  // namespace portwin::testing_support
