#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>

#include "portwin/grid/data_grid.hpp"
#include "portwin/solver/types.hpp"

namespace portwin {

/// Which faces of a block lie on the domain boundary, and their kind.
using BlockBoundary = std::array<std::optional<BoundaryKind>, 6>;

using FaceFields = std::array<ScalarField, 3>;

inline FaceFields make_face_fields(const Int3& n) {
  return {ScalarField(n), ScalarField(n), ScalarField(n)};
}

namespace detail {

template <typename Fn>
void for_interior(const Int3& n, Fn&& fn) {
  for (int k = 0; k < n[2]; ++k)
    for (int j = 0; j < n[1]; ++j)
      for (int i = 0; i < n[0]; ++i) fn(i, j, k);
}

inline double sq(double x) { return x * x; }

}  // namespace detail

/// A face between cell c and c + e_axis whose velocity is computed (not
/// prescribed): fluid on the low side and fluid or outflow on the high side.
inline bool face_is_free(const GhostArray<CellFlag>& flag, std::size_t idx, std::ptrdiff_t stride) {
  if (flag[idx] != CellFlag::Fluid) return false;
  const CellFlag nb = flag[idx + stride];
  return nb == CellFlag::Fluid || nb == CellFlag::Outflow;
}

/// Sets prescribed velocity faces, ghost velocities and ghost pressures on
/// the domain-boundary faces of one axis. Transverse ghost rows are covered
/// as well, so calling axes in x, y, z order (interleaved with the halo
/// exchange of the same axis) fills edges and corners consistently.
inline void apply_boundary_axis(DataGrid& g, int a, const BlockBoundary& bb,
                                const BoundarySpec& spec, bool velocity = true,
                                bool pressure = true) {
  const Int3 n = g.cells();
  for (int side = 0; side < 2; ++side) {
    const Face f = make_face(a, side == 1);
    if (!bb[face_index(f)]) continue;
    const BoundaryKind kind = *bb[face_index(f)];
    const bool high = side == 1;
    const int ghost = high ? n[a] : -1;
    const int inner = high ? n[a] - 1 : 0;
    int b1 = (a + 1) % 3, b2 = (a + 2) % 3;
    for (int t2 = -1; t2 <= n[b2]; ++t2) {
      for (int t1 = -1; t1 <= n[b1]; ++t1) {
        Int3 gc, ic;
        gc[a] = ghost;
        ic[a] = inner;
        gc[b1] = ic[b1] = t1;
        gc[b2] = ic[b2] = t2;
        const std::size_t gi = g.p.index(gc[0], gc[1], gc[2]);
        const std::size_t ii = g.p.index(ic[0], ic[1], ic[2]);
        if (pressure) {
          g.p[gi] = kind == BoundaryKind::Outflow ? 2.0 * spec.p_out - g.p[ii] : g.p[ii];
        }
        if (!velocity) continue;
        // Normal component: the boundary face itself is index -1 (low) or
        // n-1 (high); index n holds the face beyond a high boundary.
        ScalarField& un = g.vel[a];
        const double fixed = kind == BoundaryKind::Inflow ? spec.inflow[a] : 0.0;
        if (!high) {
          un[gi] = fixed;
        } else {
          if (kind != BoundaryKind::Outflow) un[ii] = fixed;
          un[gi] = un[ii];
        }
        for (int b : {b1, b2}) {
          ScalarField& ut = g.vel[b];
          switch (kind) {
            case BoundaryKind::Wall: ut[gi] = -ut[ii]; break;
            case BoundaryKind::Inflow: ut[gi] = 2.0 * spec.inflow[b] - ut[ii]; break;
            case BoundaryKind::Outflow:
            case BoundaryKind::Slip: ut[gi] = ut[ii]; break;
          }
        }
      }
    }
  }
}

/// Forces zero velocity on every stored face touching a solid cell.
inline void zero_solid_faces(DataGrid& g) {
  const Int3 n = g.cells();
  for (int a = 0; a < 3; ++a) {
    const std::ptrdiff_t s = g.flag.stride(a);
    ScalarField& u = g.vel[a];
    for (int k = -1; k <= n[2]; ++k)
      for (int j = -1; j <= n[1]; ++j)
        for (int i = -1; i <= n[0]; ++i) {
          const Int3 c{i, j, k};
          if (c[a] == n[a]) continue;  // no high neighbour stored
          const std::size_t idx = g.flag.index(i, j, k);
          if (g.flag[idx] == CellFlag::Solid || g.flag[idx + s] == CellFlag::Solid) u[idx] = 0.0;
        }
  }
}

/// All boundary conditions of one block, axes in x, y, z order.
inline void apply_boundary_conditions(DataGrid& g, const BlockBoundary& bb, const BoundarySpec& spec) {
  for (int a = 0; a < 3; ++a) apply_boundary_axis(g, a, bb, spec);
  zero_solid_faces(g);
}

/// Explicit momentum term H_a = -div(u_a u) + nu lap(u_a) + b_a on every
/// free owned face (zero elsewhere). Second-order central finite volumes on
/// the staggered grid; pressure is excluded.
inline void explicit_term(const DataGrid& g, const Vec3& h, const FluidProps& props, FaceFields& out) {
  const Int3 n = g.cells();
  const std::ptrdiff_t st[3] = {g.p.stride(0), g.p.stride(1), g.p.stride(2)};
  const double inv_h[3] = {1.0 / h[0], 1.0 / h[1], 1.0 / h[2]};
  const double inv_h2[3] = {inv_h[0] * inv_h[0], inv_h[1] * inv_h[1], inv_h[2] * inv_h[2]};
  for (int a = 0; a < 3; ++a) {
    const double* ua = g.vel[a].data();
    double* H = out[a].data();
    out[a].fill(0.0);
    const std::ptrdiff_t sa = st[a];
    detail::for_interior(n, [&](int i, int j, int k) {
      const std::size_t idx = g.p.index(i, j, k);
      if (!face_is_free(g.flag, idx, sa)) return;
      double acc = props.body_force[a];
      for (int b = 0; b < 3; ++b) {
        const std::ptrdiff_t sb = st[b];
        double fp, fm;
        if (b == a) {
          fp = detail::sq(0.5 * (ua[idx] + ua[idx + sa]));
          fm = detail::sq(0.5 * (ua[idx - sa] + ua[idx]));
        } else {
          const double* ub = g.vel[b].data();
          fp = 0.5 * (ua[idx] + ua[idx + sb]) * 0.5 * (ub[idx] + ub[idx + sa]);
          fm = 0.5 * (ua[idx - sb] + ua[idx]) * 0.5 * (ub[idx - sb] + ub[idx - sb + sa]);
        }
        acc -= (fp - fm) * inv_h[b];
        acc += props.nu * (ua[idx + sb] - 2.0 * ua[idx] + ua[idx - sb]) * inv_h2[b];
      }
      H[idx] = acc;
    });
  }
}

/// Two-step Adams-Bashforth predictor on free owned faces; the first step
/// falls back to forward Euler.
inline void predictor_step(DataGrid& g, const FaceFields& h_now, double dt, bool first_step) {
  const Int3 n = g.cells();
  for (int a = 0; a < 3; ++a) {
    const std::ptrdiff_t sa = g.p.stride(a);
    double* u = g.vel[a].data();
    const double* hn = h_now[a].data();
    const double* hp = g.h_prev[a].data();
    detail::for_interior(n, [&](int i, int j, int k) {
      const std::size_t idx = g.p.index(i, j, k);
      if (!face_is_free(g.flag, idx, sa)) return;
      u[idx] += first_step ? dt * hn[idx] : dt * (1.5 * hn[idx] - 0.5 * hp[idx]);
    });
  }
}

/// Net face flux per unit volume of every interior fluid cell (zero in
/// solid cells).
inline void divergence(const DataGrid& g, const Vec3& h, ScalarField& out) {
  const Int3 n = g.cells();
  detail::for_interior(n, [&](int i, int j, int k) {
    const std::size_t idx = g.p.index(i, j, k);
    if (g.flag[idx] != CellFlag::Fluid) {
      out[idx] = 0.0;
      return;
    }
    double d = 0;
    for (int a = 0; a < 3; ++a) {
      const ScalarField& u = g.vel[a];
      d += (u[idx] - u[idx - g.p.stride(a)]) / h[a];
    }
    out[idx] = d;
  });
}

/// u = u* - dt/rho grad p on free owned faces.
inline void correct_velocity(DataGrid& g, const Vec3& h, double dt, double rho) {
  const Int3 n = g.cells();
  for (int a = 0; a < 3; ++a) {
    const std::ptrdiff_t sa = g.p.stride(a);
    double* u = g.vel[a].data();
    const double* p = g.p.data();
    const double c = dt / (rho * h[a]);
    detail::for_interior(n, [&](int i, int j, int k) {
      const std::size_t idx = g.p.index(i, j, k);
      if (!face_is_free(g.flag, idx, sa)) return;
      u[idx] -= c * (p[idx + sa] - p[idx]);
    });
  }
}

/// Largest |u_a| per component over faces bounding fluid cells.
inline Vec3 max_abs_velocity(const DataGrid& g) {
  const Int3 n = g.cells();
  Vec3 m{0, 0, 0};
  detail::for_interior(n, [&](int i, int j, int k) {
    const std::size_t idx = g.p.index(i, j, k);
    if (g.flag[idx] != CellFlag::Fluid) return;
    for (int a = 0; a < 3; ++a) {
      const ScalarField& u = g.vel[a];
      m[a] = std::max({m[a], std::abs(u[idx]), std::abs(u[idx - g.p.stride(a)])});
    }
  });
  return m;
}

/// dt = C min(min_a h_a / max|u_a|, min_a h_a^2 / (6 nu), dt_max); the
/// convective limit is skipped for components at rest.
inline double stable_dt(const Vec3& max_u, const Vec3& h, double nu, const SimConfig& cfg) {
  double limit = cfg.dt_max;
  double hmin = h[0];
  for (int a = 0; a < 3; ++a) {
    hmin = std::min(hmin, h[a]);
    if (max_u[a] > 0) limit = std::min(limit, h[a] / max_u[a]);
  }
  if (nu > 0) limit = std::min(limit, hmin * hmin / (6.0 * nu));
  return cfg.cfl * limit;
}

}  // namespace portwin
