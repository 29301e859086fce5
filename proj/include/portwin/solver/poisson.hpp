#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "portwin/core/error.hpp"
#include "portwin/exchange/compile.hpp"
#include "portwin/exchange/nbh.hpp"
#include "portwin/exchange/plan.hpp"
#include "portwin/exchange/transfer.hpp"
#include "portwin/grid/hierarchy.hpp"
#include "portwin/solver/kernels.hpp"
#include "portwin/solver/types.hpp"

namespace portwin {

struct PoissonResult {
  int iterations = 0;
  double residual = 0;  // relative L2 residual
  bool converged = false;
};

/// Pressure Poisson solver on the complete level `depth` of a hierarchy.
///
/// The system is A p = b with A = -L, L the 7-point Laplacian built from
/// face conductances (1/h^2 between fluid cells, 0 across solid cells and
/// non-outflow boundaries, 2/h^2 towards an outflow boundary, whose ghost
/// pressure is mirrored about p_out). Conjugate gradients are preconditioned
/// by one symmetric multigrid V-cycle per iteration. Coarse levels are the
/// coarser hierarchy depths followed by halvings of the root block; their
/// conductances are averages of the fine ones scaled by 1/r^2. The coarsest
/// level is factored densely.
class PoissonSolver {
 public:
  enum Field : int {
    kX,  // multigrid unknown / correction
    kB,  // multigrid right-hand side
    kR,  // residual scratch
    kT,  // prolongation scratch
    kCx,
    kCy,
    kCz,   // conductance of the high face of each cell
    kMask, // 1 for active (fluid) cells
    kInvD, // inverse diagonal
    kCoarseFieldCount,
    kRhs = kCoarseFieldCount,  // level 0 only from here on
    kDir,  // outflow boundary contribution to the right-hand side
    kPx,   // solution
    kPr,
    kPd,
    kPq,
    kFieldCount
  };

  static constexpr double kOmega = 0.8;
  static constexpr int kIntraRootLimit = 512;
  static constexpr int kDenseLimit = 1500;
  static constexpr int kCoarseSweeps = 40;
  static constexpr int kGrowthLimit = 3;

  PoissonSolver(Cluster& cluster, const GridHierarchy& h, const NbhRepository& repo, int depth,
                const std::map<Uid, int>& owner, const BoundarySpec& spec, const SimConfig& cfg)
      : cluster_(cluster), cfg_(cfg), access_(*this) {
    if (!h.level_complete(depth)) throw PreconditionError("poisson level must be complete");
    const GridConfig& gc = h.config();
    const Int3 n = gc.block_size;

    // Hierarchy levels, finest first.
    for (int d = depth; d >= 0; --d) {
      Level L;
      L.n = n;
      L.depth = d;
      L.uids = h.at_depth(d);
      if (d < depth) L.ratio = gc.ratio_into(d + 1);
      for (std::size_t b = 0; b < L.uids.size(); ++b) L.index[L.uids[b]] = static_cast<int>(b);
      for (Uid u : L.uids) {
        if (d == depth) {
          auto it = owner.find(u);
          L.owner.push_back(it == owner.end() ? 0 : it->second);
        } else {
          const Level& fine = levels_.back();
          L.owner.push_back(fine.owner[fine.index.at(h.grid(u).children.front())]);
        }
      }
      levels_.push_back(std::move(L));
    }
    // Halvings of the root block.
    for (;;) {
      const Level& last = levels_.back();
      if (product(last.n) <= kIntraRootLimit) break;
      Int3 r{1, 1, 1};
      bool any = false;
      for (int a = 0; a < 3; ++a) {
        if (last.n[a] > 1 && last.n[a] % 2 == 0) {
          r[a] = 2;
          any = true;
        }
      }
      if (!any) break;
      Level L;
      L.n = {last.n[0] / r[0], last.n[1] / r[1], last.n[2] / r[2]};
      L.ratio = r;
      L.depth = -1;
      L.uids = last.uids;
      L.index = last.index;
      L.owner = last.owner;
      levels_.push_back(std::move(L));
    }

    Ownership owners;
    for (Level& L : levels_) {
      owners.push_back(L.owner);
      L.blocks_of.assign(static_cast<std::size_t>(cluster_.workers()), {});
      for (std::size_t b = 0; b < L.uids.size(); ++b) {
        if (L.owner[b] < 0 || L.owner[b] >= cluster_.workers()) throw PartitionError("block owner out of range");
        L.blocks_of[L.owner[b]].push_back(static_cast<int>(b));
      }
      L.fields.resize(L.uids.size());
    }
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      Level& L = levels_[l];
      const int nf = l == 0 ? kFieldCount : kCoarseFieldCount;
      for (auto& fs : L.fields) fs.assign(static_cast<std::size_t>(nf), ScalarField(L.n));
    }

    // Transfers.
    for (std::size_t l = 0; l < levels_.size(); ++l) {
      Level& L = levels_[l];
      const int li = static_cast<int>(l);
      if (L.depth >= 0) {
        const ExchangePlan plan = build_exchange_plan(repo, ExchangePhase::Horizontal, n, L.depth);
        L.halo = TransferSet(
            compile_face_transfers(plan, [&](Uid u) { return std::pair{li, L.index.at(u)}; }, n, false),
            owners, cluster_.workers());
      }
      if (l == 0) continue;
      const Level& F = levels_[l - 1];
      std::vector<Transfer> cells, inject;
      std::array<std::vector<Transfer>, 3> faces;
      for (std::size_t fb = 0; fb < F.uids.size(); ++fb) {
        int cb;
        Int3 offset{0, 0, 0};
        if (L.depth >= 0) {
          const LogicalGrid& child = h.grid(F.uids[fb]);
          cb = L.index.at(*child.parent);
          const LogicalGrid& parent = h.grid(*child.parent);
          for (int a = 0; a < 3; ++a) {
            offset[a] = (child.block_coords[a] - parent.block_coords[a] * L.ratio[a]) * (n[a] / L.ratio[a]);
          }
        } else {
          cb = static_cast<int>(fb);
        }
        Transfer base;
        base.src_level = li - 1;
        base.src_block = static_cast<int>(fb);
        base.dst_level = li;
        base.dst_block = cb;
        base.src_uid = F.uids[fb];
        base.dst_uid = L.uids[cb];
        Transfer t = base;
        fill_restrict_indices(t, F.n, L.n, L.ratio, offset);
        cells.push_back(std::move(t));
        for (int a = 0; a < 3; ++a) {
          Transfer tf = base;
          fill_face_restrict_indices(tf, F.n, L.n, L.ratio, offset, a);
          faces[a].push_back(std::move(tf));
        }
        Transfer ti;
        ti.src_level = li;
        ti.src_block = cb;
        ti.dst_level = li - 1;
        ti.dst_block = static_cast<int>(fb);
        ti.src_uid = L.uids[cb];
        ti.dst_uid = F.uids[fb];
        fill_inject_indices(ti, F.n, L.n, L.ratio, offset);
        inject.push_back(std::move(ti));
      }
      L.restrict_cells = TransferSet(std::move(cells), owners, cluster_.workers());
      L.prolong = TransferSet(std::move(inject), owners, cluster_.workers());
      for (int a = 0; a < 3; ++a) L.restrict_faces[a] = TransferSet(std::move(faces[a]), owners, cluster_.workers());
    }

    // Fine-level coefficients from the cell flags.
    const Vec3 hc = gc.cell_size_at(depth);
    Level& L0 = levels_[0];
    for (std::size_t b = 0; b < L0.uids.size(); ++b) {
      const GhostArray<CellFlag>& flag = h.block(L0.uids[b]).flag;
      auto& F = L0.fields[b];
      for (int a = 0; a < 3; ++a) {
        const double c = 1.0 / (hc[a] * hc[a]);
        ScalarField& C = F[kCx + a];
        const std::ptrdiff_t sa = flag.stride(a);
        Int3 lo{0, 0, 0};
        lo[a] = -1;
        detail::for_box(lo, n, [&](Int3 q) {
          const std::size_t idx = flag.index(q[0], q[1], q[2]);
          const CellFlag f0 = flag[idx], f1 = flag[idx + sa];
          double v = 0;
          if (f0 == CellFlag::Fluid && f1 == CellFlag::Fluid) {
            v = c;
          } else if ((f0 == CellFlag::Fluid && f1 == CellFlag::Outflow) ||
                     (f0 == CellFlag::Outflow && f1 == CellFlag::Fluid)) {
            v = 2 * c;
            const bool low_is_fluid = f0 == CellFlag::Fluid;
            const int inner = low_is_fluid ? q[a] : q[a] + 1;
            if (inner >= 0 && inner < n[a]) F[kDir][low_is_fluid ? idx : idx + sa] += v * spec.p_out;
          }
          C[idx] = v;
        });
      }
      detail::for_interior(n, [&](int i, int j, int k) {
        F[kMask](i, j, k) = flag(i, j, k) == CellFlag::Fluid ? 1.0 : 0.0;
      });
    }
    finish_level(0);

    // Coarse coefficients by restriction.
    for (std::size_t l = 1; l < levels_.size(); ++l) {
      Level& L = levels_[l];
      for (int a = 0; a < 3; ++a) {
        const int f = kCx + a;
        cluster_.execute(L.restrict_faces[a], access_, std::span<const int>(&f, 1));
        const double s = 1.0 / (L.ratio[a] * L.ratio[a]);
        for (auto& F : L.fields) {
          for (double& v : F[kCx + a].raw()) v *= s;
        }
      }
      const int m = kMask;
      cluster_.execute(L.restrict_cells, access_, std::span<const int>(&m, 1));
      for (auto& F : L.fields) {
        for (double& v : F[kMask].raw()) v = v > 0 ? 1.0 : 0.0;
      }
      finish_level(static_cast<int>(l));
    }
    setup_coarse_solve();
  }

  PoissonSolver(const PoissonSolver&) = delete;
  PoissonSolver& operator=(const PoissonSolver&) = delete;

  int level_count() const { return static_cast<int>(levels_.size()); }
  Int3 level_cells(int l) const { return levels_.at(l).n; }
  int level_blocks(int l) const { return static_cast<int>(levels_.at(l).uids.size()); }
  bool coarse_dense() const { return !chol_.empty() || coarse_active_ == 0; }

  const std::vector<Uid>& uids() const { return levels_[0].uids; }
  int block_index(Uid u) const { return levels_[0].index.at(u); }
  ScalarField& field(int block, Field f) { return levels_[0].fields.at(block).at(f); }
  const ScalarField& field(int block, Field f) const { return levels_[0].fields.at(block).at(f); }
  ScalarField& field(int level, int block, int f) { return levels_.at(level).fields.at(block).at(f); }

  /// out = A in on the fine level (ghosts of `in` refreshed first).
  void apply(Field in, Field out) {
    halo(0, in);
    run_blocks(0, [&](Level& L, std::vector<ScalarField>& F) { op_block(L, F, in, out, -1); });
  }

  /// b - A x on the fine level, written to `out`.
  void residual(Field b, Field x, Field out) {
    halo(0, x);
    run_blocks(0, [&](Level& L, std::vector<ScalarField>& F) { op_block(L, F, x, out, b); });
  }

  /// Block-ordered inner product over fine-level interiors.
  double dot(Field a, Field b) { return dot_level(0, a, b); }

  /// Solves A Px = Rhs starting from the current Px.
  PoissonResult solve() {
    PoissonResult res;
    residual(kRhs, kPx, kPr);
    const double bnorm = std::sqrt(dot(kRhs, kRhs));
    const double denom = bnorm > 0 ? bnorm : 1.0;
    double rel = std::sqrt(dot(kPr, kPr)) / denom;
    check_finite(rel, 0);
    res.residual = rel;
    if (rel <= cfg_.poisson_tol || rel == 0) {
      res.converged = true;
      return res;
    }
    precondition();
    copy0(kX, kPd);
    double rz = dot(kPr, kX);
    double prev = rel;
    int growth = 0;
    for (int it = 1; it <= cfg_.max_vcycles; ++it) {
      apply(kPd, kPq);
      const double dq = dot(kPd, kPq);
      if (!(dq > 0) || !std::isfinite(dq)) {
        throw SolverFailure("pressure solve broke down at iteration " + std::to_string(it) +
                            " (non-positive curvature " + std::to_string(dq) + ")");
      }
      const double alpha = rz / dq;
      run_blocks(0, [&](Level& L, std::vector<ScalarField>& F) {
        for_cells(L.n, [&](std::size_t i) {
          F[kPx][i] += alpha * F[kPd][i];
          F[kPr][i] -= alpha * F[kPq][i];
        });
      });
      rel = std::sqrt(dot(kPr, kPr)) / denom;
      check_finite(rel, it);
      res.iterations = it;
      res.residual = rel;
      if (rel <= cfg_.poisson_tol) {
        res.converged = true;
        return res;
      }
      growth = rel > prev ? growth + 1 : 0;
      if (growth >= kGrowthLimit) {
        throw SolverFailure("pressure solve diverging: residual grew over " + std::to_string(kGrowthLimit) +
                            " consecutive iterations (relative residual " + std::to_string(rel) + ")");
      }
      prev = rel;
      precondition();
      const double rz_new = dot(kPr, kX);
      const double beta = rz_new / rz;
      rz = rz_new;
      run_blocks(0, [&](Level& L, std::vector<ScalarField>& F) {
        for_cells(L.n, [&](std::size_t i) { F[kPd][i] = F[kX][i] + beta * F[kPd][i]; });
      });
    }
    return res;
  }

  /// Plain multigrid iteration Px += V(Rhs - A Px), `cycles` times.
  /// Returns the relative residual after the last cycle.
  double iterate_vcycles(int cycles) {
    double bnorm = std::sqrt(dot(kRhs, kRhs));
    if (bnorm == 0) bnorm = 1;
    for (int c = 0; c < cycles; ++c) {
      residual(kRhs, kPx, kPr);
      precondition();
      run_blocks(0, [&](Level& L, std::vector<ScalarField>& F) {
        for_cells(L.n, [&](std::size_t i) { F[kPx][i] += F[kX][i]; });
      });
    }
    residual(kRhs, kPx, kPr);
    return std::sqrt(dot(kPr, kPr)) / bnorm;
  }

 private:
  struct Level {
    Int3 n{0, 0, 0};
    Int3 ratio{1, 1, 1};  // coarsening factor from the previous level
    int depth = -1;       // hierarchy depth, -1 for root halvings
    std::vector<Uid> uids;
    std::map<Uid, int> index;
    std::vector<int> owner;
    std::vector<std::vector<int>> blocks_of;
    std::vector<std::vector<ScalarField>> fields;
    TransferSet halo;
    TransferSet restrict_cells;
    TransferSet prolong;
    std::array<TransferSet, 3> restrict_faces;
  };

  class Access final : public FieldAccess {
   public:
    explicit Access(PoissonSolver& s) : s_(s) {}
    ScalarField& field(int level, int block, int f) override { return s_.levels_[level].fields[block][f]; }

   private:
    PoissonSolver& s_;
  };

  template <typename Fn>
  static void for_cells(const Int3& n, Fn&& fn) {
    const GhostIndexer ix{n};
    for (int k = 0; k < n[2]; ++k)
      for (int j = 0; j < n[1]; ++j) {
        const std::size_t base = ix(0, j, k);
        for (int i = 0; i < n[0]; ++i) fn(base + i);
      }
  }

  template <typename Fn>
  void run_blocks(int l, Fn&& fn) {
    Level& L = levels_[l];
    cluster_.run([&](int w) {
      for (int b : L.blocks_of[w]) fn(L, L.fields[b]);
    });
  }

  void halo(int l, int f) { cluster_.execute(levels_[l].halo, access_, std::span<const int>(&f, 1)); }

  double dot_level(int l, int a, int b) {
    Level& L = levels_[l];
    std::vector<double> part(L.uids.size(), 0.0);
    cluster_.run([&](int w) {
      for (int blk : L.blocks_of[w]) {
        const auto& F = L.fields[blk];
        double s = 0;
        for_cells(L.n, [&](std::size_t i) { s += F[a][i] * F[b][i]; });
        part[blk] = s;
      }
    });
    double s = 0;
    for (double v : part) s += v;
    return s;
  }

  void copy0(int src, int dst) {
    run_blocks(0, [&](Level& L, std::vector<ScalarField>& F) {
      for_cells(L.n, [&](std::size_t i) { F[dst][i] = F[src][i]; });
    });
  }

  static void check_finite(double v, int it) {
    if (!std::isfinite(v)) {
      throw SolverFailure("pressure solve produced a non-finite residual at iteration " + std::to_string(it));
    }
  }

  /// out = A x (b < 0) or out = b - A x, zero in inactive cells.
  static void op_block(const Level& L, std::vector<ScalarField>& F, int x, int out, int b) {
    const ScalarField& X = F[x];
    const double* c0 = F[kCx].data();
    const double* c1 = F[kCy].data();
    const double* c2 = F[kCz].data();
    const double* m = F[kMask].data();
    const double* xv = X.data();
    double* o = F[out].data();
    const double* bv = b >= 0 ? F[b].data() : nullptr;
    const std::ptrdiff_t s0 = X.stride(0), s1 = X.stride(1), s2 = X.stride(2);
    for_cells(L.n, [&](std::size_t i) {
      if (m[i] == 0) {
        o[i] = 0;
        return;
      }
      const double ax = (c0[i] + c0[i - s0] + c1[i] + c1[i - s1] + c2[i] + c2[i - s2]) * xv[i] -
                        (c0[i] * xv[i + s0] + c0[i - s0] * xv[i - s0] + c1[i] * xv[i + s1] +
                         c1[i - s1] * xv[i - s1] + c2[i] * xv[i + s2] + c2[i - s2] * xv[i - s2]);
      o[i] = bv ? bv[i] - ax : ax;
    });
  }

  void finish_level(int l) {
    for (auto& F : levels_[l].fields) {
      const std::ptrdiff_t s0 = F[kX].stride(0), s1 = F[kX].stride(1), s2 = F[kX].stride(2);
      for_cells(levels_[l].n, [&](std::size_t i) {
        const double d = F[kCx][i] + F[kCx][i - s0] + F[kCy][i] + F[kCy][i - s1] + F[kCz][i] + F[kCz][i - s2];
        if (F[kMask][i] == 0 || d <= 0) {
          F[kMask][i] = 0;
          F[kInvD][i] = 0;
        } else {
          F[kInvD][i] = 1.0 / d;
        }
      });
    }
  }

  void smooth(int l) {
    halo(l, kX);
    run_blocks(l, [&](Level& L, std::vector<ScalarField>& F) {
      op_block(L, F, kX, kR, kB);
      for_cells(L.n, [&](std::size_t i) { F[kX][i] += kOmega * F[kInvD][i] * F[kR][i]; });
    });
  }

  void vcycle(int l) {
    if (l + 1 == level_count()) {
      coarse_solve();
      return;
    }
    run_blocks(l, [&](Level&, std::vector<ScalarField>& F) { F[kX].fill(0.0); });
    for (int s = 0; s < cfg_.pre_sweeps; ++s) smooth(l);
    halo(l, kX);
    run_blocks(l, [&](Level& LL, std::vector<ScalarField>& F) { op_block(LL, F, kX, kR, kB); });
    Level& C = levels_[l + 1];
    const int r = kR, b = kB, x = kX, t = kT;
    cluster_.execute(C.restrict_cells, access_, std::span<const int>(&r, 1), std::span<const int>(&b, 1));
    vcycle(l + 1);
    cluster_.execute(C.prolong, access_, std::span<const int>(&x, 1), std::span<const int>(&t, 1));
    run_blocks(l, [&](Level& LL, std::vector<ScalarField>& F) {
      for_cells(LL.n, [&](std::size_t i) { F[kX][i] += F[kMask][i] * F[kT][i]; });
    });
    for (int s = 0; s < cfg_.post_sweeps; ++s) smooth(l);
  }

  void precondition() {
    copy0(kPr, kB);
    vcycle(0);
  }

  void setup_coarse_solve() {
    Level& L = levels_.back();
    auto& F = L.fields.front();
    coarse_cells_.clear();
    std::vector<int> slot(F[kX].size(), -1);
    for_cells(L.n, [&](std::size_t i) {
      if (F[kMask][i] != 0) {
        slot[i] = static_cast<int>(coarse_cells_.size());
        coarse_cells_.push_back(i);
      }
    });
    coarse_active_ = static_cast<int>(coarse_cells_.size());
    if (coarse_active_ == 0 || coarse_active_ > kDenseLimit) return;
    const std::size_t m = coarse_cells_.size();
    chol_.assign(m * m, 0.0);
    const std::ptrdiff_t st[3] = {F[kX].stride(0), F[kX].stride(1), F[kX].stride(2)};
    for (std::size_t r = 0; r < m; ++r) {
      const std::size_t i = coarse_cells_[r];
      chol_[r * m + r] = 1.0 / F[kInvD][i];
      for (int a = 0; a < 3; ++a) {
        const double* c = F[kCx + a].data();
        const int hi = slot[i + st[a]];
        const int lo = slot[i - st[a]];
        if (hi >= 0) chol_[r * m + hi] -= c[i];
        if (lo >= 0) chol_[r * m + lo] -= c[i - st[a]];
      }
    }
    // In-place lower Cholesky factor.
    for (std::size_t j = 0; j < m; ++j) {
      double d = chol_[j * m + j];
      for (std::size_t k = 0; k < j; ++k) d -= chol_[j * m + k] * chol_[j * m + k];
      if (!(d > 0)) throw SolverFailure("coarse pressure operator is not positive definite");
      d = std::sqrt(d);
      chol_[j * m + j] = d;
      for (std::size_t i = j + 1; i < m; ++i) {
        double s = chol_[i * m + j];
        for (std::size_t k = 0; k < j; ++k) s -= chol_[i * m + k] * chol_[j * m + k];
        chol_[i * m + j] = s / d;
      }
    }
  }

  void coarse_solve() {
    const int l = level_count() - 1;
    if (chol_.empty()) {
      run_blocks(l, [&](Level&, std::vector<ScalarField>& F) { F[kX].fill(0.0); });
      if (coarse_active_ == 0) return;
      for (int s = 0; s < kCoarseSweeps; ++s) smooth(l);
      return;
    }
    run_blocks(l, [&](Level&, std::vector<ScalarField>& F) {
      const std::size_t m = coarse_cells_.size();
      std::vector<double> y(m);
      for (std::size_t r = 0; r < m; ++r) {
        double s = F[kB][coarse_cells_[r]];
        for (std::size_t k = 0; k < r; ++k) s -= chol_[r * m + k] * y[k];
        y[r] = s / chol_[r * m + r];
      }
      for (std::size_t r = m; r-- > 0;) {
        double s = y[r];
        for (std::size_t k = r + 1; k < m; ++k) s -= chol_[k * m + r] * y[k];
        y[r] = s / chol_[r * m + r];
      }
      F[kX].fill(0.0);
      for (std::size_t r = 0; r < m; ++r) F[kX][coarse_cells_[r]] = y[r];
    });
  }

  Cluster& cluster_;
  SimConfig cfg_;
  Access access_;
  std::vector<Level> levels_;
  std::vector<std::size_t> coarse_cells_;
  int coarse_active_ = 0;
  std::vector<double> chol_;
};

}  // namespace portwin
