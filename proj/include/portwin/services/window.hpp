#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "portwin/grid/hierarchy.hpp"
#include "portwin/runtime/simulation.hpp"
#include "portwin/services/compress.hpp"
#include "portwin/services/protocol.hpp"

namespace portwin {

inline std::uint64_t bytes_per_cell(std::uint8_t fields) {
  return static_cast<std::uint64_t>(kBytesPerValue) * static_cast<std::uint64_t>(selected_field_count(fields));
}

/// Response bytes other than raw cell values: fixed header, block records
/// and the worst-case DEFLATE expansion of `raw_bytes`.
inline std::uint64_t header_bytes(std::uint64_t blocks, std::uint64_t raw_bytes) {
  return kResponseFixedBytes + blocks * kBlockRecordBytes + (compressed_size_bound(raw_bytes) - raw_bytes);
}

/// Smallest admissible budget: one block record plus one cell.
inline std::uint64_t minimum_budget(std::uint64_t bpc) { return header_bytes(1, bpc) + bpc; }

/// Cells a window selects at one depth with a global stride.
struct LevelSelection {
  int depth = 0;
  int stride = 1;
  std::int64_t cells = 0;
  bool covered = true;  // every block holding selected cells exists
  std::vector<BlockRecord> blocks;

  std::uint64_t raw_bytes(std::uint64_t bpc) const { return static_cast<std::uint64_t>(cells) * bpc; }
  std::uint64_t total_bytes(std::uint64_t bpc) const {
    return raw_bytes(bpc) + header_bytes(blocks.size(), raw_bytes(bpc));
  }
};

namespace detail {

// Number of indices i in [lo, hi) with (i - origin) % s == 0, and the first.
inline std::pair<int, int> strided_span(int lo, int hi, int origin, int s) {
  if (hi <= lo) return {0, lo};
  int first = lo + ((origin - lo) % s + s) % s;
  if (first >= hi) return {0, first};
  return {(hi - 1 - first) / s + 1, first};
}

}  // namespace detail

/// Cells whose centres lie in `window` at `depth`, keeping every
/// `stride`-th cell per axis counted from the first selected cell.
/// Block positions are enumerated from the level geometry, so missing blocks
/// show up as `covered == false`.
inline LevelSelection select_cells(const GridHierarchy& h, const Box& window, int depth, int stride) {
  const GridConfig& cfg = h.config();
  const Int3 nb = cfg.blocks_at(depth);
  const Int3 n = cfg.block_size;
  const Box dom = cfg.domain();
  LevelSelection out;
  out.depth = depth;
  out.stride = stride;
  Int3 blo, bhi;
  for (int a = 0; a < kDim; ++a) {
    const double e = dom.max[a] - dom.min[a];
    const double f0 = (window.min[a] - dom.min[a]) / e * nb[a];
    const double f1 = (window.max[a] - dom.min[a]) / e * nb[a];
    if (!std::isfinite(f0) || !std::isfinite(f1)) return out;
    blo[a] = static_cast<int>(std::clamp(std::floor(f0) - 1, 0.0, static_cast<double>(nb[a])));
    bhi[a] = static_cast<int>(std::clamp(std::ceil(f1) + 1, 0.0, static_cast<double>(nb[a])));
  }
  struct Raw {
    Int3 coords;
    Int3 lo, hi;
  };
  std::vector<Raw> raws;
  Int3 origin{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), std::numeric_limits<int>::max()};
  for (int z = blo[2]; z < bhi[2]; ++z)
    for (int y = blo[1]; y < bhi[1]; ++y)
      for (int x = blo[0]; x < bhi[0]; ++x) {
        LogicalGrid virt;
        virt.block_coords = {x, y, z};
        virt.bbox = detail::level_block_box(cfg, depth, virt.block_coords);
        const BlockCellRange r = h.block_window_range(virt, window);
        if (r.count() == 0) continue;
        raws.push_back({virt.block_coords, r.lo, r.hi});
        for (int a = 0; a < kDim; ++a) origin[a] = std::min(origin[a], virt.block_coords[a] * n[a] + r.lo[a]);
      }
  for (const Raw& r : raws) {
    BlockRecord rec;
    rec.coords = r.coords;
    std::int64_t cells = 1;
    for (int a = 0; a < kDim; ++a) {
      const int off = r.coords[a] * n[a];
      auto [cnt, first] = detail::strided_span(off + r.lo[a], off + r.hi[a], origin[a], stride);
      rec.count[a] = cnt;
      rec.first[a] = first - off;
      cells *= cnt;
    }
    if (cells == 0) continue;
    if (auto uid = h.find(depth, r.coords)) {
      rec.uid = uid->packed;
    } else {
      out.covered = false;
    }
    out.cells += cells;
    out.blocks.push_back(rec);
  }
  return out;
}

/// Deepest depth whose cells in the window fit the budget at stride 1. When
/// no depth fits, the shallowest depth holding cells of the window (depth 0
/// unless the window falls between its cell centres) with the smallest
/// power-of-two stride that fits. Only depths fully populated over the
/// window qualify. A window selecting no cells yields zero cells.
inline LevelSelection select_level(const GridHierarchy& h, const Box& window, std::uint64_t max_bytes,
                                   std::uint64_t bpc) {
  if (bpc == 0) throw PreconditionError("bytes per cell must be positive");
  if (max_bytes < minimum_budget(bpc)) {
    throw PreconditionError("budget " + std::to_string(max_bytes) + " below the minimum of " +
                            std::to_string(minimum_budget(bpc)) + " bytes");
  }
  int coarsest = -1;
  for (int d = h.deepest_depth(); d >= 0; --d) {
    LevelSelection s = select_cells(h, window, d, 1);
    if (s.cells == 0 || !s.covered) continue;
    if (s.total_bytes(bpc) <= max_bytes) return s;
    coarsest = d;
  }
  if (coarsest < 0) return LevelSelection{};
  for (int stride = 2;; stride *= 2) {
    LevelSelection s = select_cells(h, window, coarsest, stride);
    if (s.total_bytes(bpc) <= max_bytes) return s;
    if (s.cells <= 1) throw PreconditionError("budget cannot hold a single cell");
  }
}

namespace detail {

inline float window_value(const DataGrid& d, int bit, int i, int j, int k) {
  auto centred = [&](int a) {
    Int3 lo{i, j, k};
    lo[a] -= 1;
    return 0.5 * (d.vel[a](i, j, k) + d.vel[a](lo[0], lo[1], lo[2]));
  };
  switch (bit) {
    case 0:
    case 1:
    case 2:
      return static_cast<float>(centred(bit));
    case 3:
      return static_cast<float>(d.p(i, j, k));
    case 4:
      return static_cast<float>(norm(Vec3{centred(0), centred(1), centred(2)}));
    default:
      return static_cast<float>(static_cast<int>(d.flag(i, j, k)));
  }
}

}  // namespace detail

/// Raw little-endian f32 values of a selection: per block, per selected
/// field in bit order, x fastest.
inline ByteBuffer gather_values(const GridHierarchy& h, const LevelSelection& sel, std::uint8_t fields) {
  ByteBuffer out;
  out.reserve(static_cast<std::size_t>(sel.raw_bytes(bytes_per_cell(fields))));
  const int s = sel.stride;
  for (const BlockRecord& rec : sel.blocks) {
    const DataGrid& d = h.block(Uid{rec.uid});
    for (int bit = 0; bit < 6; ++bit) {
      if (!((fields >> bit) & 1)) continue;
      for (int kk = 0; kk < rec.count[2]; ++kk)
        for (int jj = 0; jj < rec.count[1]; ++jj)
          for (int ii = 0; ii < rec.count[0]; ++ii) {
            const float v = detail::window_value(d, bit, rec.first[0] + ii * s, rec.first[1] + jj * s,
                                                 rec.first[2] + kk * s);
            const auto* b = reinterpret_cast<const std::uint8_t*>(&v);
            out.insert(out.end(), b, b + 4);
          }
    }
  }
  return out;
}

/// Validates a request; violations raise ProtocolError.
inline void check_window_request(const WindowRequest& req) {
  if (!req.window.valid()) throw ProtocolError("window box must be finite with max > min on every axis");
  if (req.fields == 0 || (req.fields & ~kSelAll) != 0) throw ProtocolError("invalid field selector");
  const std::uint64_t bpc = bytes_per_cell(req.fields);
  if (req.max_bytes < minimum_budget(bpc)) {
    throw ProtocolError("max_bytes " + std::to_string(req.max_bytes) + " below the minimum of " +
                        std::to_string(minimum_budget(bpc)));
  }
}

/// Answers one window request from a consistent snapshot.
inline WindowResponse handle_window_request(const WindowRequest& req, const Snapshot& snap) {
  check_window_request(req);
  WindowResponse r;
  r.request_id = req.request_id;
  r.step = snap.step;
  r.fields = req.fields;
  const GridHierarchy& h = snap.hierarchy;
  const std::uint64_t bpc = bytes_per_cell(req.fields);
  LevelSelection sel;
  if (req.window.overlaps(h.config().domain())) sel = select_level(h, req.window, req.max_bytes, bpc);
  if (sel.cells == 0) {
    r.status = ResponseStatus::Empty;
    r.stride = {1, 1, 1};
    r.compressed = compress_stream(nullptr, 0);
    return r;
  }
  r.depth = sel.depth;
  r.stride = {sel.stride, sel.stride, sel.stride};
  r.cell_count = static_cast<std::uint64_t>(sel.cells);
  r.blocks = sel.blocks;
  const ByteBuffer raw = gather_values(h, sel, req.fields);
  r.uncompressed_size = raw.size();
  r.compressed = compress_stream(raw);
  return r;
}

}  // namespace portwin
