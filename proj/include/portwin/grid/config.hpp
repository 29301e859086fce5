#pragma once

#include <string>

#include "portwin/core/error.hpp"
#include "portwin/core/geometry.hpp"

namespace portwin {

/// Shape of the block hierarchy. The root block is split `root_refine`
/// times per axis, every deeper block `sub_refine` times. Every data grid
/// holds `block_size` interior cells.
struct GridConfig {
  Vec3 domain_min{0, 0, 0};
  Vec3 domain_max{1, 1, 1};
  Int3 root_refine{2, 2, 2};
  Int3 sub_refine{2, 2, 2};
  Int3 block_size{8, 8, 8};
  int max_depth = 3;

  friend bool operator==(const GridConfig&, const GridConfig&) = default;

  Box domain() const { return Box{domain_min, domain_max}; }

  /// Blocks per axis on a fully populated level.
  Int3 blocks_at(int depth) const {
    Int3 n{1, 1, 1};
    if (depth >= 1) n = root_refine;
    for (int d = 2; d <= depth; ++d) n = n * sub_refine;
    return n;
  }

  /// Global cell resolution of a fully populated level.
  Int3 resolution_at(int depth) const { return blocks_at(depth) * block_size; }

  /// Per-axis refinement factor from depth-1 to depth.
  Int3 ratio_into(int depth) const { return depth == 1 ? root_refine : sub_refine; }

  Vec3 cell_size_at(int depth) const {
    const Int3 r = resolution_at(depth);
    const Vec3 e = domain_max - domain_min;
    return {e[0] / r[0], e[1] / r[1], e[2] / r[2]};
  }

  void validate() const {
    for (int a = 0; a < kDim; ++a) {
      if (root_refine[a] < 1 || sub_refine[a] < 1 || block_size[a] < 1) {
        throw ConfigError("refinement factors and block size must be >= 1");
      }
      if (block_size[a] % sub_refine[a] != 0 || block_size[a] % root_refine[a] != 0) {
        throw ConfigError("block size " + std::to_string(block_size[a]) + " on axis " +
                          std::to_string(a) + " is not divisible by the refinement factors");
      }
      if (!(domain_max[a] > domain_min[a])) {
        throw ConfigError("domain_max must exceed domain_min on every axis");
      }
    }
    if (max_depth < 0) throw ConfigError("max_depth must be >= 0");
  }
};

}  // namespace portwin
