#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "portwin/grid/hierarchy.hpp"
#include "portwin/porous/packing.hpp"

namespace portwin {

/// Default share of the domain length along x kept free of spheres in front
/// of the specimen.
inline constexpr double kDefaultRunUpFraction = 0.25;

/// Domain part that holds the specimen: everything behind the run-up zone.
inline Box specimen_region(const Box& domain, double run_up_fraction = kDefaultRunUpFraction) {
  if (!(run_up_fraction >= 0 && run_up_fraction < 1)) throw ConfigError("run-up fraction must lie in [0, 1)");
  Box b = domain;
  b.min[0] = domain.min[0] + run_up_fraction * (domain.max[0] - domain.min[0]);
  return b;
}

inline bool point_in_sphere(const Vec3& p, const Sphere& s) {
  const Vec3 d = p - s.center;
  return dot(d, d) < s.radius * s.radius;
}

namespace detail {

inline void voxelize_block(const GridHierarchy& h, const LogicalGrid& g, DataGrid& d, const std::vector<Sphere>& spheres) {
  const Int3 n = h.config().block_size;
  for (int k = 0; k < n[2]; ++k)
    for (int j = 0; j < n[1]; ++j)
      for (int i = 0; i < n[0]; ++i) d.flag(i, j, k) = CellFlag::Fluid;
  for (const Sphere& s : spheres) {
    const Box sb{{s.center[0] - s.radius, s.center[1] - s.radius, s.center[2] - s.radius},
                 {s.center[0] + s.radius, s.center[1] + s.radius, s.center[2] + s.radius}};
    if (!sb.overlaps(g.bbox)) continue;
    Int3 lo, hi;
    for (int a = 0; a < kDim; ++a) {
      std::tie(lo[a], hi[a]) = centre_range_1d(g.bbox, n[a], a, sb.min[a], sb.max[a]);
    }
    for (int k = lo[2]; k < hi[2]; ++k)
      for (int j = lo[1]; j < hi[1]; ++j)
        for (int i = lo[0]; i < hi[0]; ++i) {
          if (point_in_sphere(h.cell_center(g, i, j, k), s)) d.flag(i, j, k) = CellFlag::Solid;
        }
  }
}

// Coarse cell SOLID iff more than half of its children are SOLID.
inline void restrict_flags_majority(GridHierarchy& h, Uid parent) {
  const LogicalGrid& pg = h.grid(parent);
  if (pg.children.empty()) return;
  const Int3 n = h.config().block_size;
  const Int3 r = h.config().ratio_into(pg.depth + 1);
  const int group = r[0] * r[1] * r[2];
  std::vector<int> solid(static_cast<std::size_t>(product(n)), 0);
  for (Uid c : pg.children) {
    const LogicalGrid& cg = h.grid(c);
    const DataGrid& cd = h.block(c);
    Int3 off;
    for (int a = 0; a < kDim; ++a) off[a] = (cg.block_coords[a] - pg.block_coords[a] * r[a]) * (n[a] / r[a]);
    for (int k = 0; k < n[2]; ++k)
      for (int j = 0; j < n[1]; ++j)
        for (int i = 0; i < n[0]; ++i) {
          if (cd.flag(i, j, k) != CellFlag::Solid) continue;
          const Int3 q{off[0] + i / r[0], off[1] + j / r[1], off[2] + k / r[2]};
          ++solid[q[0] + n[0] * (q[1] + n[1] * q[2])];
        }
  }
  DataGrid& pd = h.block(parent);
  for (int k = 0; k < n[2]; ++k)
    for (int j = 0; j < n[1]; ++j)
      for (int i = 0; i < n[0]; ++i) {
        pd.flag(i, j, k) = 2 * solid[i + n[0] * (j + n[1] * k)] > group ? CellFlag::Solid : CellFlag::Fluid;
      }
}

}  // namespace detail

/// Sets interior cell flags of every block. Blocks at or below the deepest
/// complete level use the centre-in-sphere test; coarser blocks take the
/// majority of their children. Ghost flags are left to the solver setup.
inline void voxelize(GridHierarchy& h, const std::vector<Sphere>& spheres) {
  const int complete = h.complete_depth();
  for (int d = complete; d < h.depth_count(); ++d) {
    for (Uid u : h.at_depth(d)) detail::voxelize_block(h, h.grid(u), h.block(u), spheres);
  }
  for (int d = complete - 1; d >= 0; --d) {
    for (Uid u : h.at_depth(d)) detail::restrict_flags_majority(h, u);
  }
}

struct FlagCounts {
  std::int64_t fluid = 0;
  std::int64_t solid = 0;
  std::int64_t total() const { return fluid + solid; }
};

/// Fluid and solid cells of one depth whose centres lie in `region`.
inline FlagCounts count_flags(const GridHierarchy& h, int depth, const Box& region) {
  FlagCounts c;
  for (Uid u : h.at_depth(depth)) {
    const BlockCellRange r = h.block_window_range(h.grid(u), region);
    const DataGrid& d = h.block(u);
    for (int k = r.lo[2]; k < r.hi[2]; ++k)
      for (int j = r.lo[1]; j < r.hi[1]; ++j)
        for (int i = r.lo[0]; i < r.hi[0]; ++i) {
          if (d.flag(i, j, k) == CellFlag::Solid) {
            ++c.solid;
          } else {
            ++c.fluid;
          }
        }
  }
  return c;
}

/// Fluid share of the cells in `region` at `depth`.
inline double porosity(const GridHierarchy& h, int depth, const Box& region) {
  const FlagCounts c = count_flags(h, depth, region);
  if (c.total() == 0) throw PreconditionError("porosity region contains no cells");
  return static_cast<double>(c.fluid) / static_cast<double>(c.total());
}

/// 1 - porosity, so the two always sum to exactly one.
inline double solid_fraction(const GridHierarchy& h, int depth, const Box& region) {
  return 1.0 - porosity(h, depth, region);
}

}  // namespace portwin
