#pragma once

#include <cstdint>
#include <vector>

#include "portwin/grid/hierarchy.hpp"
#include "portwin/solver/kernels.hpp"
#include "portwin/solver/types.hpp"

namespace portwin {

/// Domain-boundary faces of a block and their kinds.
inline BlockBoundary block_boundary(const GridHierarchy& h, Uid uid, const BoundarySpec& spec) {
  const LogicalGrid& g = h.grid(uid);
  const Int3 nb = h.config().blocks_at(g.depth);
  BlockBoundary bb;
  for (Face f : kAllFaces) {
    const int a = face_axis(f);
    const bool edge = face_is_high(f) ? g.block_coords[a] == nb[a] - 1 : g.block_coords[a] == 0;
    if (edge) bb[face_index(f)] = spec.kind(f);
  }
  return bb;
}

/// Fills the ghost layer of every cell-flag array at `depth`: neighbour
/// interior where a same-depth neighbour exists, the boundary kind on the
/// domain boundary, and a copy of the own interior layer elsewhere. Axes are
/// processed in order so edge and corner ghosts end up consistent.
inline void fill_ghost_flags(GridHierarchy& h, int depth, const BoundarySpec& spec) {
  const Int3 n = h.config().block_size;
  for (int a = 0; a < 3; ++a) {
    const int b1 = (a + 1) % 3, b2 = (a + 2) % 3;
    for (Uid uid : h.at_depth(depth)) {
      const LogicalGrid& g = h.grid(uid);
      const BlockBoundary bb = block_boundary(h, uid, spec);
      GhostArray<CellFlag>& dst = h.block(uid).flag;
      for (int side = 0; side < 2; ++side) {
        const Face f = make_face(a, side == 1);
        Int3 nc = g.block_coords;
        nc[a] += side == 1 ? 1 : -1;
        std::optional<Uid> nb_uid;
        if (nc[a] >= 0) nb_uid = h.find(depth, nc);
        const GhostArray<CellFlag>* src = nb_uid ? &h.block(*nb_uid).flag : nullptr;
        const int ghost = side == 1 ? n[a] : -1;
        const int from = src ? (side == 1 ? 0 : n[a] - 1) : (side == 1 ? n[a] - 1 : 0);
        for (int t2 = -1; t2 <= n[b2]; ++t2)
          for (int t1 = -1; t1 <= n[b1]; ++t1) {
            Int3 gc, sc;
            gc[a] = ghost;
            sc[a] = from;
            gc[b1] = sc[b1] = t1;
            gc[b2] = sc[b2] = t2;
            CellFlag v;
            if (src) {
              v = (*src)(sc[0], sc[1], sc[2]);
            } else if (bb[face_index(f)]) {
              v = boundary_flag(*bb[face_index(f)]);
            } else {
              v = dst(sc[0], sc[1], sc[2]);
            }
            dst(gc[0], gc[1], gc[2]) = v;
          }
      }
    }
  }
}

/// Converts fluid cells that have no fluid path to an outflow face into
/// solid cells; such pockets would make the pressure system singular.
/// Requires a complete level. Returns the number of converted cells.
inline std::int64_t remove_isolated_pockets(GridHierarchy& h, int depth, const BoundarySpec& spec) {
  const GridConfig& cfg = h.config();
  const Int3 res = cfg.resolution_at(depth);
  const Int3 n = cfg.block_size;
  auto gidx = [&](const Int3& c) {
    return static_cast<std::size_t>(c[0]) +
           static_cast<std::size_t>(res[0]) * (static_cast<std::size_t>(c[1]) +
                                               static_cast<std::size_t>(res[1]) * c[2]);
  };
  const std::size_t total = static_cast<std::size_t>(res[0]) * res[1] * res[2];
  // 0 solid, 1 fluid unreached, 2 reached
  std::vector<std::uint8_t> state(total, 0);
  for (Uid uid : h.at_depth(depth)) {
    const LogicalGrid& g = h.grid(uid);
    const DataGrid& d = h.block(uid);
    detail::for_interior(n, [&](int i, int j, int k) {
      if (d.flag(i, j, k) != CellFlag::Fluid) return;
      state[gidx({g.block_coords[0] * n[0] + i, g.block_coords[1] * n[1] + j,
                  g.block_coords[2] * n[2] + k})] = 1;
    });
  }
  std::vector<Int3> stack;
  auto seed = [&](const Int3& c) {
    std::uint8_t& s = state[gidx(c)];
    if (s == 1) {
      s = 2;
      stack.push_back(c);
    }
  };
  for (Face f : kAllFaces) {
    if (spec.kind(f) != BoundaryKind::Outflow) continue;
    const int a = face_axis(f);
    const int b1 = (a + 1) % 3, b2 = (a + 2) % 3;
    for (int t2 = 0; t2 < res[b2]; ++t2)
      for (int t1 = 0; t1 < res[b1]; ++t1) {
        Int3 c;
        c[a] = face_is_high(f) ? res[a] - 1 : 0;
        c[b1] = t1;
        c[b2] = t2;
        seed(c);
      }
  }
  while (!stack.empty()) {
    const Int3 c = stack.back();
    stack.pop_back();
    for (Face f : kAllFaces) {
      Int3 m = c;
      const int a = face_axis(f);
      m[a] += face_is_high(f) ? 1 : -1;
      if (m[a] < 0 || m[a] >= res[a]) continue;
      seed(m);
    }
  }
  std::int64_t converted = 0;
  for (Uid uid : h.at_depth(depth)) {
    const LogicalGrid& g = h.grid(uid);
    DataGrid& d = h.block(uid);
    detail::for_interior(n, [&](int i, int j, int k) {
      if (d.flag(i, j, k) != CellFlag::Fluid) return;
      if (state[gidx({g.block_coords[0] * n[0] + i, g.block_coords[1] * n[1] + j,
                      g.block_coords[2] * n[2] + k})] == 1) {
        d.flag(i, j, k) = CellFlag::Solid;
        ++converted;
      }
    });
  }
  return converted;
}

}  // namespace portwin
