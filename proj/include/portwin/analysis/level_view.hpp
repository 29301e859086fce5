#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "portwin/core/error.hpp"
#include "portwin/grid/hierarchy.hpp"

namespace portwin {

/// Global (i, j, k) addressing over one complete level of a hierarchy.
class LevelView {
 public:
  LevelView(const GridHierarchy& h, int depth) : h_(&h), depth_(depth) {
    if (!h.level_complete(depth)) {
      throw PreconditionError("level " + std::to_string(depth) + " is not fully populated");
    }
    n_ = h.config().block_size;
    nb_ = h.config().blocks_at(depth);
    res_ = h.config().resolution_at(depth);
    h_cell_ = h.config().cell_size_at(depth);
    blocks_.assign(static_cast<std::size_t>(product(nb_)), nullptr);
    for (Uid u : h.at_depth(depth)) {
      const Int3 c = h.grid(u).block_coords;
      blocks_[c[0] + nb_[0] * (c[1] + nb_[1] * c[2])] = &h.block(u);
    }
  }

  int depth() const { return depth_; }
  const Int3& resolution() const { return res_; }
  const Vec3& cell_size() const { return h_cell_; }
  const GridHierarchy& hierarchy() const { return *h_; }

  /// Half-open global index range of cells whose centres lie in `box`.
  std::pair<Int3, Int3> cell_range(const Box& box) const {
    Int3 lo, hi;
    const Box dom = h_->config().domain();
    for (int a = 0; a < kDim; ++a) {
      std::tie(lo[a], hi[a]) = detail::centre_range_1d(dom, res_[a], a, box.min[a], box.max[a]);
    }
    return {lo, hi};
  }

  Vec3 center(const Int3& g) const {
    const Box dom = h_->config().domain();
    Vec3 c;
    for (int a = 0; a < kDim; ++a) c[a] = detail::cell_center_1d(dom, res_[a], a, g[a]);
    return c;
  }

  bool inside(const Int3& g) const {
    for (int a = 0; a < kDim; ++a) {
      if (g[a] < 0 || g[a] >= res_[a]) return false;
    }
    return true;
  }

  CellFlag flag(const Int3& g) const {
    auto [b, l] = locate(g);
    return b->flag(l[0], l[1], l[2]);
  }

  double pressure(const Int3& g) const {
    auto [b, l] = locate(g);
    return b->p(l[0], l[1], l[2]);
  }

  /// Velocity on the high face of cell g along axis a.
  double face_velocity(int a, const Int3& g) const {
    auto [b, l] = locate(g);
    return b->vel[a](l[0], l[1], l[2]);
  }

  /// Cell-centred velocity component: mean of the two bounding faces.
  double centred_velocity(int a, const Int3& g) const {
    Int3 lo = g;
    lo[a] -= 1;
    double low;
    if (lo[a] >= 0) {
      low = face_velocity(a, lo);
    } else {
      auto [b, l] = locate(g);
      Int3 gl = l;
      gl[a] -= 1;
      low = b->vel[a](gl[0], gl[1], gl[2]);
    }
    return 0.5 * (low + face_velocity(a, g));
  }

 private:
  std::pair<const DataGrid*, Int3> locate(const Int3& g) const {
    if (!inside(g)) throw RangeError("cell index outside the level");
    Int3 bc, l;
    for (int a = 0; a < kDim; ++a) {
      bc[a] = g[a] / n_[a];
      l[a] = g[a] - bc[a] * n_[a];
    }
    return {blocks_[bc[0] + nb_[0] * (bc[1] + nb_[1] * bc[2])], l};
  }

  const GridHierarchy* h_;
  int depth_;
  Int3 n_, nb_, res_;
  Vec3 h_cell_;
  std::vector<const DataGrid*> blocks_;
};

}  // namespace portwin
