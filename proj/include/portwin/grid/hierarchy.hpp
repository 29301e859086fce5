#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "portwin/core/error.hpp"
#include "portwin/core/geometry.hpp"
#include "portwin/grid/config.hpp"
#include "portwin/grid/data_grid.hpp"
#include "portwin/grid/morton.hpp"
#include "portwin/grid/uid.hpp"

namespace portwin {

/// Topology/geometry node. Holds no field data.
struct LogicalGrid {
  Uid uid;
  int depth = 0;
  Box bbox;
  std::optional<Uid> parent;
  std::vector<Uid> children;
  Int3 block_coords{0, 0, 0};  // index among all blocks of this depth

  bool is_leaf() const { return children.empty(); }
};

/// Half-open local interior cell range [lo, hi) of one block.
struct BlockCellRange {
  Uid uid;
  Int3 lo{0, 0, 0};
  Int3 hi{0, 0, 0};

  std::int64_t count() const {
    return std::int64_t{hi[0] - lo[0]} * (hi[1] - lo[1]) * (hi[2] - lo[2]);
  }
};

struct WindowCells {
  std::int64_t count = 0;
  std::vector<BlockCellRange> ranges;
};

namespace detail {

inline Box level_block_box(const GridConfig& cfg, int depth, const Int3& coords) {
  const Int3 nb = cfg.blocks_at(depth);
  Box b;
  for (int a = 0; a < kDim; ++a) {
    const double e = cfg.domain_max[a] - cfg.domain_min[a];
    const double f0 = static_cast<double>(coords[a]) / nb[a];
    const double f1 = static_cast<double>(coords[a] + 1) / nb[a];
    b.min[a] = coords[a] == 0 ? cfg.domain_min[a] : cfg.domain_min[a] + f0 * e;
    b.max[a] = coords[a] + 1 == nb[a] ? cfg.domain_max[a] : cfg.domain_min[a] + f1 * e;
  }
  return b;
}

inline double cell_center_1d(const Box& bbox, int n, int axis, int idx) {
  const double h = (bbox.max[axis] - bbox.min[axis]) / n;
  return bbox.min[axis] + (idx + 0.5) * h;
}

// Half-open index range of cells along one axis whose centre lies in
// [wlo, whi).
inline std::pair<int, int> centre_range_1d(const Box& bbox, int n, int axis, double wlo,
                                           double whi) {
  const double h = (bbox.max[axis] - bbox.min[axis]) / n;
  auto first_at_or_above = [&](double w) {
    double g = std::ceil((w - bbox.min[axis]) / h - 0.5);
    int i = static_cast<int>(std::clamp(g, -1.0, static_cast<double>(n) + 1.0));
    while (i > 0 && cell_center_1d(bbox, n, axis, i - 1) >= w) --i;
    while (i < n && cell_center_1d(bbox, n, axis, i) < w) ++i;
    return std::clamp(i, 0, n);
  };
  const int lo = first_at_or_above(wlo);
  const int hi = first_at_or_above(whi);
  return {lo, std::max(lo, hi)};
}

}  // namespace detail

/// Block-structured hierarchy of logical grids, each linked to one data grid.
class GridHierarchy {
 public:
  GridHierarchy() = default;

  /// Builds the root and refines every block uniformly down to `uniform_depth`.
  /// Without `with_fields` only the topology is kept and block() throws.
  static GridHierarchy build(const GridConfig& config, int uniform_depth, bool with_fields = true) {
    config.validate();
    if (uniform_depth < 0 || uniform_depth > config.max_depth) {
      throw ConfigError("uniform depth " + std::to_string(uniform_depth) +
                        " outside [0, max_depth]");
    }
    long double total = 1;
    long double level = 1;
    for (int d = 1; d <= uniform_depth; ++d) {
      const Int3 r = config.ratio_into(d);
      level *= static_cast<long double>(r[0]) * r[1] * r[2];
      total += level;
    }
    if (total > static_cast<long double>(kMaxUidPart) + 1) {
      throw CapacityError("uniform hierarchy needs more grids than the 32-bit local id space");
    }
    GridHierarchy h;
    h.config_ = config;
    h.with_fields_ = with_fields;
    h.add_grid(0, std::nullopt, Int3{0, 0, 0});
    for (int d = 0; d < uniform_depth; ++d) {
      const std::vector<Uid> level = h.depth_index_[d];
      for (const Uid& uid : level) h.refine(uid);
    }
    return h;
  }

  const GridConfig& config() const { return config_; }
  const std::map<Uid, LogicalGrid>& grids() const { return grids_; }
  const std::map<Uid, DataGrid>& data() const { return data_; }
  std::map<Uid, DataGrid>& data() { return data_; }

  bool has_fields() const { return with_fields_; }

  int depth_count() const { return static_cast<int>(depth_index_.size()); }
  int deepest_depth() const { return depth_count() - 1; }

  const std::vector<Uid>& at_depth(int d) const {
    static const std::vector<Uid> empty;
    if (d < 0 || d >= depth_count()) return empty;
    return depth_index_[d];
  }

  /// True when every block position of the level exists.
  bool level_complete(int d) const {
    return d >= 0 && d < depth_count() &&
           static_cast<std::int64_t>(depth_index_[d].size()) == product(config_.blocks_at(d));
  }

  /// Deepest depth whose level is fully populated.
  int complete_depth() const {
    int d = 0;
    while (level_complete(d + 1)) ++d;
    return d;
  }

  const LogicalGrid& grid(Uid uid) const {
    auto it = grids_.find(uid);
    if (it == grids_.end()) throw LookupError("unknown grid uid " + std::to_string(uid.packed));
    return it->second;
  }
  bool contains(Uid uid) const { return grids_.count(uid) != 0; }

  DataGrid& block(Uid uid) {
    auto it = data_.find(uid);
    if (it == data_.end()) throw LookupError("no data grid for uid " + std::to_string(uid.packed));
    return it->second;
  }
  const DataGrid& block(Uid uid) const {
    auto it = data_.find(uid);
    if (it == data_.end()) throw LookupError("no data grid for uid " + std::to_string(uid.packed));
    return it->second;
  }

  std::optional<Uid> find(int depth, const Int3& coords) const {
    if (depth < 0 || depth >= depth_count()) return std::nullopt;
    for (int a = 0; a < kDim; ++a) {
      if (coords[a] < 0) return std::nullopt;
    }
    const Int3 nb = config_.blocks_at(depth);
    for (int a = 0; a < kDim; ++a) {
      if (coords[a] >= nb[a]) return std::nullopt;
    }
    auto it = by_position_.find({depth, morton_key(coords)});
    if (it == by_position_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<Uid> leaves() const {
    std::vector<Uid> out;
    for (const auto& [uid, g] : grids_) {
      if (g.is_leaf()) out.push_back(uid);
    }
    return out;
  }

  /// Splits a leaf into its children; child fields are injected from the
  /// covering parent cell.
  std::vector<Uid> refine(Uid uid) {
    auto it = grids_.find(uid);
    if (it == grids_.end()) throw LookupError("refine: unknown uid " + std::to_string(uid.packed));
    if (!it->second.is_leaf()) throw RefinementError("refine: grid is not a leaf");
    const int depth = it->second.depth;
    if (depth >= config_.max_depth) throw RefinementError("refine: grid already at max depth");

    const Int3 r = config_.ratio_into(depth + 1);
    const Int3 base = it->second.block_coords * r;
    std::vector<Uid> kids;
    kids.reserve(static_cast<std::size_t>(product(r)));
    for (int cz = 0; cz < r[2]; ++cz) {
      for (int cy = 0; cy < r[1]; ++cy) {
        for (int cx = 0; cx < r[0]; ++cx) {
          const Uid kid = add_grid(depth + 1, uid, base + Int3{cx, cy, cz});
          kids.push_back(kid);
          if (with_fields_) inject_from_parent(kid);
        }
      }
    }
    grids_.at(uid).children = kids;
    return kids;
  }

  /// Copies the covering parent values into a child block (interior cells
  /// only). With `fields_only` the flags and the time history are kept.
  void inject_from_parent(Uid child, bool fields_only = false) {
    const LogicalGrid& g = grid(child);
    if (!g.parent) return;
    const LogicalGrid& pg = grid(*g.parent);
    const DataGrid& src = block(pg.uid);
    DataGrid& dst = block(child);
    const Int3 r = config_.ratio_into(g.depth);
    const Int3 s = config_.block_size;
    Int3 off;
    for (int a = 0; a < kDim; ++a) off[a] = (g.block_coords[a] - pg.block_coords[a] * r[a]) * (s[a] / r[a]);
    for (int k = 0; k < s[2]; ++k) {
      for (int j = 0; j < s[1]; ++j) {
        for (int i = 0; i < s[0]; ++i) {
          const Int3 c{off[0] + i / r[0], off[1] + j / r[1], off[2] + k / r[2]};
          dst.p(i, j, k) = src.p(c[0], c[1], c[2]);
          if (!fields_only) dst.flag(i, j, k) = src.flag(c[0], c[1], c[2]);
          const Int3 fine{i, j, k};
          for (int a = 0; a < kDim; ++a) {
            // Child face coinciding with a parent face copies it, otherwise
            // it takes the parent cell-centred value.
            const bool on_parent_face = (fine[a] + 1) % r[a] == 0;
            Int3 lo = c;
            lo[a] -= 1;
            const double centred =
                0.5 * (src.vel[a](c[0], c[1], c[2]) + src.vel[a](lo[0], lo[1], lo[2]));
            dst.vel[a](i, j, k) = on_parent_face ? src.vel[a](c[0], c[1], c[2]) : centred;
            if (!fields_only) dst.h_prev[a](i, j, k) = 0.0;
          }
        }
      }
    }
    dst.step = src.step;
  }

  /// Centre of interior cell (i, j, k) of a grid.
  Vec3 cell_center(const LogicalGrid& g, int i, int j, int k) const {
    const Int3 n = config_.block_size;
    const Int3 idx{i, j, k};
    Vec3 c;
    for (int a = 0; a < kDim; ++a) {
      if (idx[a] < 0 || idx[a] >= n[a]) {
        throw RangeError("cell index " + std::to_string(idx[a]) + " outside block on axis " +
                         std::to_string(a));
      }
      c[a] = detail::cell_center_1d(g.bbox, n[a], a, idx[a]);
    }
    return c;
  }

  Vec3 cell_size(int depth) const {
    const Int3 n = config_.block_size;
    const Box b = detail::level_block_box(config_, depth, Int3{0, 0, 0});
    return {(b.max[0] - b.min[0]) / n[0], (b.max[1] - b.min[1]) / n[1],
            (b.max[2] - b.min[2]) / n[2]};
  }

  /// Depth-`depth` cells whose centres lie inside `window`.
  WindowCells cells_in_window(const Box& window, int depth) const {
    WindowCells out;
    for (const Uid& uid : at_depth(depth)) {
      const BlockCellRange r = block_window_range(grid(uid), window);
      if (r.count() > 0) {
        out.count += r.count();
        out.ranges.push_back(r);
      }
    }
    return out;
  }

  BlockCellRange block_window_range(const LogicalGrid& g, const Box& window) const {
    BlockCellRange r{g.uid, {0, 0, 0}, {0, 0, 0}};
    if (!g.bbox.overlaps(window)) return r;
    const Int3 n = config_.block_size;
    for (int a = 0; a < kDim; ++a) {
      auto [lo, hi] = detail::centre_range_1d(g.bbox, n[a], a, window.min[a], window.max[a]);
      r.lo[a] = lo;
      r.hi[a] = hi;
      if (hi <= lo) return BlockCellRange{g.uid, {0, 0, 0}, {0, 0, 0}};
    }
    return r;
  }

  /// Number of cells the window would select if level `depth` were fully
  /// populated, and whether the existing blocks actually provide all of them.
  std::pair<std::int64_t, bool> window_coverage(const Box& window, int depth) const {
    const Int3 nb = config_.blocks_at(depth);
    Int3 lo, hi;
    const Box dom = config_.domain();
    for (int a = 0; a < kDim; ++a) {
      const double e = dom.max[a] - dom.min[a];
      const double f0 = (window.min[a] - dom.min[a]) / e * nb[a];
      const double f1 = (window.max[a] - dom.min[a]) / e * nb[a];
      lo[a] = std::clamp(static_cast<int>(std::floor(f0)) - 1, 0, nb[a]);
      hi[a] = std::clamp(static_cast<int>(std::ceil(f1)) + 1, 0, nb[a]);
    }
    std::int64_t total = 0;
    bool covered = true;
    for (int z = lo[2]; z < hi[2]; ++z) {
      for (int y = lo[1]; y < hi[1]; ++y) {
        for (int x = lo[0]; x < hi[0]; ++x) {
          LogicalGrid virt;
          virt.bbox = detail::level_block_box(config_, depth, Int3{x, y, z});
          const std::int64_t c = block_window_range(virt, window).count();
          if (c == 0) continue;
          total += c;
          if (!find(depth, Int3{x, y, z})) covered = false;
        }
      }
    }
    return {total, covered};
  }

 private:
  Uid add_grid(int depth, std::optional<Uid> parent, const Int3& coords) {
    if (next_local_id_ > kMaxUidPart) throw CapacityError("32-bit local grid id space exhausted");
    const Uid uid = uid_encode(0, next_local_id_++);
    LogicalGrid g;
    g.uid = uid;
    g.depth = depth;
    g.parent = parent;
    g.block_coords = coords;
    g.bbox = detail::level_block_box(config_, depth, coords);
    grids_.emplace(uid, g);
    if (with_fields_) data_.emplace(uid, DataGrid(uid, config_.block_size));
    if (depth >= depth_count()) depth_index_.resize(static_cast<std::size_t>(depth) + 1);
    depth_index_[depth].push_back(uid);
    by_position_[{depth, morton_key(coords)}] = uid;
    return uid;
  }

  GridConfig config_;
  std::map<Uid, LogicalGrid> grids_;
  std::map<Uid, DataGrid> data_;
  std::vector<std::vector<Uid>> depth_index_;
  std::map<std::pair<int, std::uint64_t>, Uid> by_position_;
  std::int64_t next_local_id_ = 0;
  bool with_fields_ = true;
};

}  // namespace portwin
