#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "portwin/core/geometry.hpp"
#include "portwin/exchange/plan.hpp"
#include "portwin/exchange/transfer.hpp"
#include "portwin/grid/data_grid.hpp"

namespace portwin {

/// GhostArray offset computation without an array instance.
struct GhostIndexer {
  Int3 n;
  std::uint32_t operator()(int i, int j, int k) const {
    return static_cast<std::uint32_t>((i + 1) + (n[0] + 2) * ((j + 1) + (n[1] + 2) * (k + 1)));
  }
  std::uint32_t operator()(const Int3& c) const { return (*this)(c[0], c[1], c[2]); }
};

namespace detail {

template <typename Fn>
void for_box(const Int3& lo, const Int3& hi, Fn&& fn) {
  for (int k = lo[2]; k < hi[2]; ++k)
    for (int j = lo[1]; j < hi[1]; ++j)
      for (int i = lo[0]; i < hi[0]; ++i) fn(Int3{i, j, k});
}

}  // namespace detail

/// Fills the ghost layer of the target on `face` from the neighbour's
/// adjacent interior layer. With `full_extent` the transverse ghost rows
/// are carried as well, which lets axis-ordered exchanges fill edges and
/// corners.
inline void fill_halo_indices(Transfer& t, const Int3& n, Face face, bool full_extent) {
  const GhostIndexer ix{n};
  const int a = face_axis(face);
  const bool high = face_is_high(face);
  Int3 lo{full_extent ? -1 : 0, full_extent ? -1 : 0, full_extent ? -1 : 0};
  Int3 hi{full_extent ? n[0] + 1 : n[0], full_extent ? n[1] + 1 : n[1],
          full_extent ? n[2] + 1 : n[2]};
  lo[a] = 0;
  hi[a] = 1;
  const int ghost = high ? n[a] : -1;
  const int src = high ? 0 : n[a] - 1;
  detail::for_box(lo, hi, [&](Int3 c) {
    Int3 d = c, s = c;
    d[a] = ghost;
    s[a] = src;
    t.dst_index.push_back(ix(d));
    t.src_index.push_back(ix(s));
  });
}

/// Volume-average restriction of a child block into its region of the
/// parent. `offset` is the child's first parent cell.
inline void fill_restrict_indices(Transfer& t, const Int3& fine_n, const Int3& coarse_n,
                                  const Int3& ratio, const Int3& offset) {
  const GhostIndexer fi{fine_n}, ci{coarse_n};
  t.group = ratio[0] * ratio[1] * ratio[2];
  const Int3 cn{fine_n[0] / ratio[0], fine_n[1] / ratio[1], fine_n[2] / ratio[2]};
  detail::for_box({0, 0, 0}, cn, [&](Int3 c) {
    t.dst_index.push_back(ci(offset + c));
    detail::for_box({0, 0, 0}, ratio, [&](Int3 r) {
      t.src_index.push_back(fi(c[0] * ratio[0] + r[0], c[1] * ratio[1] + r[1], c[2] * ratio[2] + r[2]));
    });
  });
}

/// Constant injection of covering parent cells into every child cell.
inline void fill_inject_indices(Transfer& t, const Int3& fine_n, const Int3& coarse_n,
                                const Int3& ratio, const Int3& offset) {
  const GhostIndexer fi{fine_n}, ci{coarse_n};
  detail::for_box({0, 0, 0}, fine_n, [&](Int3 f) {
    t.dst_index.push_back(fi(f));
    t.src_index.push_back(ci(offset[0] + f[0] / ratio[0], offset[1] + f[1] / ratio[1],
                             offset[2] + f[2] / ratio[2]));
  });
}

/// Ghost layer of a fine block on `face` filled from the coarse block that
/// covers that face: each ghost cell takes the coarse cell containing its
/// centre.
inline void fill_coarse_fine_indices(Transfer& t, const Int3& n, const Box& fine_box,
                                     const Box& coarse_box, Face face) {
  const GhostIndexer ix{n};
  const int a = face_axis(face);
  Int3 lo{0, 0, 0}, hi = n;
  lo[a] = face_is_high(face) ? n[a] : -1;
  hi[a] = lo[a] + 1;
  detail::for_box(lo, hi, [&](Int3 c) {
    Int3 s;
    for (int b = 0; b < kDim; ++b) {
      const double hf = (fine_box.max[b] - fine_box.min[b]) / n[b];
      const double centre = fine_box.min[b] + (c[b] + 0.5) * hf;
      const double hc = (coarse_box.max[b] - coarse_box.min[b]) / n[b];
      s[b] = static_cast<int>(std::floor((centre - coarse_box.min[b]) / hc));
      if (s[b] < 0 || s[b] >= n[b]) return;
    }
    t.dst_index.push_back(ix(c));
    t.src_index.push_back(ix(s));
  });
}

/// Restriction of face-centred values along `axis`: each coarse face takes
/// the mean of the fine faces that make it up. Coarse faces are the high
/// faces of the child's coarse cells, plus the low face -1 when the child
/// sits at the low edge of the coarse block (`offset[axis] == 0`).
inline void fill_face_restrict_indices(Transfer& t, const Int3& fine_n, const Int3& coarse_n,
                                       const Int3& ratio, const Int3& offset, int axis) {
  const GhostIndexer fi{fine_n}, ci{coarse_n};
  Int3 tr = ratio;
  tr[axis] = 1;
  t.group = tr[0] * tr[1] * tr[2];
  const Int3 cn{fine_n[0] / ratio[0], fine_n[1] / ratio[1], fine_n[2] / ratio[2]};
  Int3 lo{0, 0, 0};
  if (offset[axis] == 0) lo[axis] = -1;
  detail::for_box(lo, cn, [&](Int3 q) {
    t.dst_index.push_back(ci(offset + q));
    const int layer = q[axis] < 0 ? -1 : ratio[axis] * (q[axis] + 1) - 1;
    detail::for_box({0, 0, 0}, tr, [&](Int3 r) {
      Int3 f;
      for (int b = 0; b < kDim; ++b) f[b] = b == axis ? layer : q[b] * ratio[b] + r[b];
      t.src_index.push_back(fi(f));
    });
  });
}

/// Location of a block in a field store: (level, block index).
using BlockLocator = std::function<std::pair<int, int>(Uid)>;

/// Turns the face messages of a plan into halo transfers. With `axis` >= 0
/// only faces normal to that axis are kept.
inline std::vector<Transfer> compile_face_transfers(const ExchangePlan& plan, const BlockLocator& locate,
                                                    const Int3& n, bool full_extent, int axis = -1) {
  std::vector<Transfer> out;
  for (const PlanMessage& m : plan.messages) {
    if (m.link != LinkKind::Face) continue;
    if (axis >= 0 && face_axis(m.face) != axis) continue;
    Transfer t;
    std::tie(t.src_level, t.src_block) = locate(m.source);
    std::tie(t.dst_level, t.dst_block) = locate(m.target);
    t.src_uid = m.source;
    t.dst_uid = m.target;
    fill_halo_indices(t, n, m.face, full_extent);
    out.push_back(std::move(t));
  }
  return out;
}

/// Turns the coarse-to-fine messages of a TOP_DOWN plan into transfers
/// filling the fine blocks' ghost layers from their coarser neighbours.
inline std::vector<Transfer> compile_coarse_fine_transfers(const ExchangePlan& plan, const BlockLocator& locate,
                                                           const std::function<Box(Uid)>& bbox, const Int3& n) {
  std::vector<Transfer> out;
  for (const PlanMessage& m : plan.messages) {
    if (m.link != LinkKind::CoarseToFine) continue;
    Transfer t;
    std::tie(t.src_level, t.src_block) = locate(m.source);
    std::tie(t.dst_level, t.dst_block) = locate(m.target);
    t.src_uid = m.source;
    t.dst_uid = m.target;
    fill_coarse_fine_indices(t, n, bbox(m.target), bbox(m.source), m.face);
    if (!t.dst_index.empty()) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace portwin
