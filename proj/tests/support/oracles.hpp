#pragma once

// Brute-force reference computations shared by the unit tests and the
// acceptance runner. None of these call into the code they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "portwin/exchange/nbh.hpp"
#include "portwin/exchange/partition.hpp"
#include "portwin/grid/hierarchy.hpp"
#include "portwin/porous/packing.hpp"
#include "portwin/runtime/simulation.hpp"
#include "portwin/solver/poisson.hpp"
#include "portwin/solver/setup.hpp"

namespace portwin::testing_support {

inline GridConfig unit_config(Int3 root, Int3 sub = {2, 2, 2}, int max_depth = 3, Int3 block = {840, 840, 840}) {
  GridConfig c;
  c.domain_min = {0, 0, 0};
  c.domain_max = {1, 1, 1};
  c.root_refine = root;
  c.sub_refine = sub;
  c.block_size = block;
  c.max_depth = max_depth;
  return c;
}

// Random topology: random root tiling (depth 1) and refinement ratio, then
// random leaves refined until `max_grids` would be exceeded.
inline GridHierarchy random_hierarchy(std::mt19937_64& rng, int max_root, std::size_t max_grids) {
  std::uniform_int_distribution<int> root(1, max_root), bit(1, 2), refinements(0, 6);
  Int3 sub{bit(rng), bit(rng), bit(rng)};
  if (sub == Int3{1, 1, 1}) sub[rng() % 3] = 2;
  GridHierarchy h = GridHierarchy::build(unit_config({root(rng), root(rng), root(rng)}, sub), 1, false);
  const std::size_t per = static_cast<std::size_t>(product(sub));
  const int n = refinements(rng);
  for (int i = 0; i < n; ++i) {
    std::vector<Uid> cand;
    for (Uid u : h.leaves()) {
      if (h.grid(u).depth < h.config().max_depth) cand.push_back(u);
    }
    if (cand.empty() || h.grids().size() + per > max_grids) break;
    h.refine(cand[rng() % cand.size()]);
  }
  return h;
}

// Independent Z-order key: bit b of x, y, z at positions 3b, 3b+1, 3b+2.
inline std::uint64_t oracle_morton(const Int3& c) {
  std::uint64_t k = 0;
  for (int b = 0; b < 21; ++b) {
    for (int a = 0; a < 3; ++a) k |= static_cast<std::uint64_t>((c[a] >> b) & 1) << (3 * b + a);
  }
  return k;
}

inline bool close_coord(double a, double b) { return std::abs(a - b) < 1e-9; }

// Face adjacency of two equal-depth boxes: touching along `axis` (b above a)
// with overlapping positive-area cross sections.
inline bool oracle_adjacent(const Box& a, const Box& b, int axis) {
  if (!close_coord(a.max[axis], b.min[axis])) return false;
  for (int o = 0; o < 3; ++o) {
    if (o == axis) continue;
    if (std::min(a.max[o], b.max[o]) - std::max(a.min[o], b.min[o]) <= 1e-9) return false;
  }
  return true;
}

inline bool strictly_inside(const Box& b, const Vec3& p) {
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] > b.min[a] + 1e-12 && p[a] < b.max[a] - 1e-12)) return false;
  }
  return true;
}

/// Empty when `p` splits the leaves of `h` into balanced chunks that
/// concatenate to the sorted (depth, Morton key) sequence.
inline std::string check_partition(const GridHierarchy& h, const Partition& p, int workers) {
  const std::vector<Uid> leaves = h.leaves();
  if (p.blocks.size() != static_cast<std::size_t>(workers)) return "wrong worker count";
  std::size_t lo = leaves.size(), hi = 0;
  for (const auto& w : p.blocks) {
    lo = std::min(lo, w.size());
    hi = std::max(hi, w.size());
  }
  if (hi - lo > 1) return "imbalance " + std::to_string(hi - lo);
  std::multiset<Uid> seen;
  for (const auto& w : p.blocks) seen.insert(w.begin(), w.end());
  if (seen.size() != leaves.size()) return "leaf count differs";
  for (Uid u : leaves) {
    if (seen.count(u) != 1) return "leaf not assigned exactly once";
  }
  if (p.assignment.size() != leaves.size()) return "assignment size differs";
  std::vector<std::tuple<int, std::uint64_t, Uid>> keys;
  for (Uid u : leaves) keys.emplace_back(h.grid(u).depth, oracle_morton(h.grid(u).block_coords), u);
  std::sort(keys.begin(), keys.end());
  std::size_t pos = 0;
  for (int w = 0; w < workers; ++w) {
    for (Uid u : p.blocks[w]) {
      if (std::get<2>(keys[pos]) != u) return "chunk not a contiguous sorted key interval";
      if (p.worker_of(u) != w) return "worker_of disagrees with chunks";
      ++pos;
    }
  }
  return "";
}

/// Empty when every neighbour slot in `repo` equals the all-pairs bbox
/// adjacency of `h`, same-depth links are symmetric, and missing links fall
/// back to the deepest coarser grid containing the would-be neighbour centre.
inline std::string check_nbh(const GridHierarchy& h, const NbhRepository& repo) {
  if (repo.size() != h.grids().size()) return "repository size differs";
  for (const auto& [uid, g] : h.grids()) {
    for (Face f : kAllFaces) {
      const int ax = face_axis(f);
      std::optional<Uid> expect;
      for (const auto& [other, og] : h.grids()) {
        if (other == uid || og.depth != g.depth) continue;
        const bool adj =
            face_is_high(f) ? oracle_adjacent(g.bbox, og.bbox, ax) : oracle_adjacent(og.bbox, g.bbox, ax);
        if (adj) {
          if (expect) return "two same-depth neighbours on one face";
          expect = other;
        }
      }
      if (repo.entry(uid).neighbors[face_index(f)] != expect) return "neighbour slot differs from oracle";
      if (expect) {
        if (repo.entry(*expect).neighbors[face_index(opposite(f))] != uid) return "asymmetric link";
        if (repo.query_neighbor(uid, f) != expect) return "query differs from slot";
        continue;
      }
      Vec3 probe = g.bbox.center();
      probe[ax] += (face_is_high(f) ? 1.0 : -1.0) * g.bbox.extent()[ax];
      std::optional<Uid> coarse;
      int best = -1;
      for (const auto& [other, og] : h.grids()) {
        if (og.depth < g.depth && og.depth > best && strictly_inside(og.bbox, probe)) {
          best = og.depth;
          coarse = other;
        }
      }
      if (repo.query_neighbor(uid, f) != coarse) return "coarse fallback differs from oracle";
    }
  }
  return "";
}

// ---------------------------------------------------------------------------
// Dense oracle for the pressure system of one complete level.

struct DenseSystem {
  std::vector<int> slot;  // global cell -> unknown, -1 for solid
  std::vector<double> A;
  std::vector<double> rhs_offset;
  int m = 0;
};

// Builds the 7-point system from the global flag array (independent of the
// solver's conductance fields).
inline DenseSystem build_dense(const std::vector<CellFlag>& flags, const Int3& res, const Vec3& h,
                               const BoundarySpec& spec) {
  DenseSystem s;
  auto gi = [&](int i, int j, int k) { return i + res[0] * (j + res[1] * k); };
  s.slot.assign(flags.size(), -1);
  for (std::size_t c = 0; c < flags.size(); ++c) {
    if (flags[c] == CellFlag::Fluid) s.slot[c] = s.m++;
  }
  s.A.assign(static_cast<std::size_t>(s.m) * s.m, 0.0);
  s.rhs_offset.assign(s.m, 0.0);
  for (int k = 0; k < res[2]; ++k)
    for (int j = 0; j < res[1]; ++j)
      for (int i = 0; i < res[0]; ++i) {
        const int r = s.slot[gi(i, j, k)];
        if (r < 0) continue;
        for (Face f : kAllFaces) {
          const int a = face_axis(f);
          Int3 c{i, j, k};
          c[a] += face_is_high(f) ? 1 : -1;
          const double w = 1.0 / (h[a] * h[a]);
          if (c[a] < 0 || c[a] >= res[a]) {
            if (spec.kind(f) == BoundaryKind::Outflow) {
              s.A[r * s.m + r] += 2 * w;
              s.rhs_offset[r] += 2 * w * spec.p_out;
            }
            continue;
          }
          const int q = s.slot[gi(c[0], c[1], c[2])];
          if (q < 0) continue;
          s.A[r * s.m + r] += w;
          s.A[r * s.m + q] -= w;
        }
      }
  return s;
}

inline std::vector<double> gauss_solve(std::vector<double> A, std::vector<double> b) {
  const std::size_t m = b.size();
  for (std::size_t c = 0; c < m; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < m; ++r) {
      if (std::abs(A[r * m + c]) > std::abs(A[piv * m + c])) piv = r;
    }
    if (piv != c) {
      for (std::size_t k = 0; k < m; ++k) std::swap(A[c * m + k], A[piv * m + k]);
      std::swap(b[c], b[piv]);
    }
    for (std::size_t r = c + 1; r < m; ++r) {
      const double f = A[r * m + c] / A[c * m + c];
      if (f == 0) continue;
      for (std::size_t k = c; k < m; ++k) A[r * m + k] -= f * A[c * m + k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(m);
  for (std::size_t r = m; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < m; ++k) s -= A[r * m + k] * x[k];
    x[r] = s / A[r * m + r];
  }
  return x;
}

struct PoissonCase {
  GridHierarchy h;
  NbhRepository repo;
  BoundarySpec spec;
  SimConfig cfg;
  int depth = 0;
};

// Unit box resolved at `depth`, solid cells drawn at random.
inline PoissonCase make_case(Int3 root_refine, Int3 block, int depth, double solid_fraction, unsigned seed) {
  PoissonCase pc;
  GridConfig gc = unit_config(root_refine, {2, 2, 2}, depth, block);
  pc.h = GridHierarchy::build(gc, depth);
  pc.depth = depth;
  pc.spec.p_out = 0.25;
  pc.cfg.poisson_tol = 1e-12;
  pc.cfg.max_vcycles = 200;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  for (Uid uid : pc.h.at_depth(depth)) {
    DataGrid& d = pc.h.block(uid);
    detail::for_interior(block, [&](int i, int j, int k) {
      if (u(rng) < solid_fraction) d.flag(i, j, k) = CellFlag::Solid;
    });
  }
  remove_isolated_pockets(pc.h, depth, pc.spec);
  fill_ghost_flags(pc.h, depth, pc.spec);
  pc.repo.register_hierarchy(pc.h);
  return pc;
}

inline std::vector<CellFlag> global_flags(const GridHierarchy& h, int depth) {
  const Int3 res = h.config().resolution_at(depth);
  const Int3 n = h.config().block_size;
  std::vector<CellFlag> out(static_cast<std::size_t>(product(res)));
  for (Uid uid : h.at_depth(depth)) {
    const Int3 bc = h.grid(uid).block_coords;
    detail::for_interior(n, [&](int i, int j, int k) {
      const int gi = bc[0] * n[0] + i, gj = bc[1] * n[1] + j, gk = bc[2] * n[2] + k;
      out[gi + res[0] * (gj + res[1] * gk)] = h.block(uid).flag(i, j, k);
    });
  }
  return out;
}

// Loads a global right-hand side into the solver (solid cells get 0).
inline void load_rhs(PoissonSolver& ps, const GridHierarchy& h, int depth, const std::vector<double>& global) {
  const Int3 res = h.config().resolution_at(depth);
  const Int3 n = h.config().block_size;
  for (Uid uid : h.at_depth(depth)) {
    const int b = ps.block_index(uid);
    const Int3 bc = h.grid(uid).block_coords;
    detail::for_interior(n, [&](int i, int j, int k) {
      const int gi = bc[0] * n[0] + i, gj = bc[1] * n[1] + j, gk = bc[2] * n[2] + k;
      const bool fluid = h.block(uid).flag(i, j, k) == CellFlag::Fluid;
      ps.field(b, PoissonSolver::kRhs)(i, j, k) =
          fluid ? global[gi + res[0] * (gj + res[1] * gk)] + ps.field(b, PoissonSolver::kDir)(i, j, k) : 0.0;
    });
  }
}

inline std::vector<double> read_solution(PoissonSolver& ps, const GridHierarchy& h, int depth) {
  const Int3 res = h.config().resolution_at(depth);
  const Int3 n = h.config().block_size;
  std::vector<double> out(static_cast<std::size_t>(product(res)), 0.0);
  for (Uid uid : h.at_depth(depth)) {
    const int b = ps.block_index(uid);
    const Int3 bc = h.grid(uid).block_coords;
    detail::for_interior(n, [&](int i, int j, int k) {
      const int gi = bc[0] * n[0] + i, gj = bc[1] * n[1] + j, gk = bc[2] * n[2] + k;
      out[gi + res[0] * (gj + res[1] * gk)] = ps.field(b, PoissonSolver::kPx)(i, j, k);
    });
  }
  return out;
}

struct DenseComparison {
  double max_error = 0;
  bool converged = false;
};

/// Solves a random right-hand side with both the multigrid solver and the
/// dense oracle and reports the largest pointwise difference.
inline DenseComparison compare_with_dense(PoissonCase& pc, PoissonSolver& ps, unsigned seed) {
  const Int3 res = pc.h.config().resolution_at(pc.depth);
  const Vec3 h = pc.h.config().cell_size_at(pc.depth);
  const auto flags = global_flags(pc.h, pc.depth);
  DenseSystem ds = build_dense(flags, res, h, pc.spec);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> g(flags.size());
  for (double& v : g) v = u(rng);
  load_rhs(ps, pc.h, pc.depth, g);
  std::vector<double> b(ds.m);
  for (std::size_t c = 0; c < flags.size(); ++c) {
    if (ds.slot[c] >= 0) b[ds.slot[c]] = g[c] + ds.rhs_offset[ds.slot[c]];
  }
  const auto x = gauss_solve(ds.A, b);
  DenseComparison out;
  out.converged = ps.solve().converged;
  const auto p = read_solution(ps, pc.h, pc.depth);
  for (std::size_t c = 0; c < flags.size(); ++c) {
    if (ds.slot[c] >= 0) out.max_error = std::max(out.max_error, std::abs(p[c] - x[ds.slot[c]]));
  }
  return out;
}

// ---------------------------------------------------------------------------

/// 1e-6 of max|u| over the smallest cell edge at the compute depth.
inline double div_bound(const Simulation& s) {
  const Vec3 hc = s.hierarchy().config().cell_size_at(s.compute_depth());
  double umax = 0;
  for (Uid uid : s.hierarchy().at_depth(s.compute_depth())) {
    const Vec3 m = max_abs_velocity(s.hierarchy().block(uid));
    for (double v : m) umax = std::max(umax, v);
  }
  return 1e-6 * (umax / std::min({hc[0], hc[1], hc[2]}) + 1e-30);
}

inline void sprinkle_solids(GridHierarchy& h, int depth, double fraction, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  for (Uid uid : h.at_depth(depth)) {
    DataGrid& d = h.block(uid);
    detail::for_interior(h.config().block_size, [&](int i, int j, int k) {
      if (u(rng) < fraction) d.flag(i, j, k) = CellFlag::Solid;
    });
  }
}

// Independent centre-in-sphere test on global indices.
inline std::int64_t brute_force_mismatches(const GridHierarchy& h, int depth, const std::vector<Sphere>& spheres) {
  const Int3 res = h.config().resolution_at(depth);
  const Int3 n = h.config().block_size;
  const Box dom = h.config().domain();
  std::int64_t bad = 0;
  for (Uid u : h.at_depth(depth)) {
    const Int3 bc = h.grid(u).block_coords;
    const DataGrid& d = h.block(u);
    for (int k = 0; k < n[2]; ++k)
      for (int j = 0; j < n[1]; ++j)
        for (int i = 0; i < n[0]; ++i) {
          const Int3 g{bc[0] * n[0] + i, bc[1] * n[1] + j, bc[2] * n[2] + k};
          Vec3 c;
          for (int a = 0; a < 3; ++a) c[a] = dom.min[a] + (g[a] + 0.5) * (dom.max[a] - dom.min[a]) / res[a];
          bool solid = false;
          for (const Sphere& s : spheres) {
            const double dx = c[0] - s.center[0], dy = c[1] - s.center[1], dz = c[2] - s.center[2];
            if (dx * dx + dy * dy + dz * dz < s.radius * s.radius) solid = true;
          }
          if (solid != (d.flag(i, j, k) == CellFlag::Solid)) ++bad;
        }
  }
  return bad;
}

/// Exhaustive pairwise overlap count (touching allowed).
inline std::int64_t overlapping_pairs(const std::vector<Sphere>& s) {
  std::int64_t bad = 0;
  for (std::size_t a = 0; a < s.size(); ++a)
    for (std::size_t b = a + 1; b < s.size(); ++b) {
      double d2 = 0;
      for (int x = 0; x < 3; ++x) d2 += (s[a].center[x] - s[b].center[x]) * (s[a].center[x] - s[b].center[x]);
      const double r = s[a].radius + s[b].radius;
      if (d2 < r * r * (1 - 1e-12)) ++bad;
    }
  return bad;
}

}  // namespace portwin::testing_support
