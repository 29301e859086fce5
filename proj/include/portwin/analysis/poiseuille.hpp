#pragma once

#include <cmath>
#include <vector>

#include "portwin/analysis/darcy.hpp"
#include "portwin/analysis/level_view.hpp"
#include "portwin/runtime/simulation.hpp"

namespace portwin {

/// Plane channel between no-slip walls at y = 0 and y = gap, driven by a
/// uniform inflow on the west face. The z axis is a two-cell slab with
/// slip faces, so the flow is two-dimensional.
struct PoiseuilleSetup {
  int cells_across = 32;       // cells over the gap (even)
  double length = 3.0;         // channel length in gaps
  double gap = 1.0;            // [m]
  double inflow = 0.01;        // [m/s]
  double nu = 1.0;             // [m^2/s]
  double rho = 1.0;            // [kg/m^3]
  int workers = 1;
  double poisson_tol = 1e-10;
  double check_interval = 0.01;  // diffusion times between steadiness checks
  double min_time = 0.05;        // diffusion times
  double max_time = 1.0;         // diffusion times
  double steady_tol = 1e-6;      // relative change of k between checks
};

struct PoiseuilleResult {
  double k_measured = 0;
  double k_analytic = 0;
  double k_error = 0;        // relative
  double profile_error = 0;  // relative L2 of u_x(y) against the parabola
  double max_div = 0;
  std::int64_t steps = 0;
  double time = 0;  // [s]
  std::vector<double> y, u_numeric, u_analytic;
};

namespace detail {

struct PoiseuilleProbe {
  double k = 0;
  double gradient = 0;  // -dp/dx [Pa/m]
};

inline PoiseuilleProbe probe_poiseuille(const Simulation& sim, const PoiseuilleSetup& s) {
  const LevelView v(sim.hierarchy(), sim.compute_depth());
  const Box dom = sim.hierarchy().config().domain();
  const double x0 = 0.5 * s.length * s.gap;
  const Box probe{{x0 - s.length * s.gap / 6, dom.min[1], dom.min[2]},
                  {x0 + s.length * s.gap / 6, dom.max[1], dom.max[2]}};
  const double mu = sim.props().nu * sim.props().rho;
  const Permeability k = subdomain_permeability(v, probe, mu);
  PoiseuilleProbe out;
  if (!k.k[0]) throw SolverFailure("channel pressure drop vanished");
  out.k = *k.k[0];
  out.gradient = -k.pressure_drop[0] / k.length[0];
  return out;
}

}  // namespace detail

inline GridConfig poiseuille_grid(const PoiseuilleSetup& s) {
  if (s.cells_across < 4 || s.cells_across % 2 != 0) throw ConfigError("cells_across must be even and >= 4");
  const int n = s.cells_across;
  const int nx = static_cast<int>(std::lround(s.length * n / 2));
  if (nx % 2 != 0) throw ConfigError("channel length gives an odd cell count along x");
  const double dy = s.gap / n;
  GridConfig gc;
  gc.domain_min = {0, 0, 0};
  gc.domain_max = {s.length * s.gap, s.gap, 2 * dy};
  gc.root_refine = {2, 2, 1};
  gc.sub_refine = {2, 2, 1};
  gc.block_size = {nx / 2, n / 2, 2};
  gc.max_depth = 1;
  return gc;
}

inline PoiseuilleResult run_poiseuille(const PoiseuilleSetup& s) {
  GridHierarchy h = GridHierarchy::build(poiseuille_grid(s), 1);
  for (auto& [uid, d] : h.data()) d.vel[0].fill(s.inflow);

  FluidProps props;
  props.nu = s.nu;
  props.rho = s.rho;
  props.body_force = {0, 0, 0};
  BoundarySpec spec;
  spec.inflow = {s.inflow, 0, 0};
  spec.p_out = 0;
  spec.faces = {BoundaryKind::Inflow, BoundaryKind::Outflow, BoundaryKind::Wall,
                BoundaryKind::Wall,   BoundaryKind::Slip,    BoundaryKind::Slip};
  SimConfig cfg;
  cfg.poisson_tol = s.poisson_tol;
  Simulation sim(std::move(h), props, spec, cfg, s.workers);

  const double tau = s.gap * s.gap / s.nu;
  PoiseuilleResult r;
  double t = 0, next_check = s.check_interval * tau;
  double k_prev = 0;
  bool have_prev = false;
  while (t < s.max_time * tau) {
    const StepReport rep = sim.step();
    t += rep.dt;
    r.max_div = std::max(r.max_div, rep.max_div);
    ++r.steps;
    if (t >= next_check) {
      next_check += s.check_interval * tau;
      const double k = detail::probe_poiseuille(sim, s).k;
      const bool settled = have_prev && std::abs(k - k_prev) <= s.steady_tol * std::abs(k);
      k_prev = k;
      have_prev = true;
      if (settled && t >= s.min_time * tau) break;
    }
  }
  r.time = t;

  const detail::PoiseuilleProbe p = detail::probe_poiseuille(sim, s);
  r.k_measured = p.k;
  r.k_analytic = s.gap * s.gap / 12;
  r.k_error = std::abs(p.k - r.k_analytic) / r.k_analytic;

  // Profile at mid-length, averaged over the slab.
  const LevelView v(sim.hierarchy(), sim.compute_depth());
  const Int3 res = v.resolution();
  const int ic = res[0] / 2;
  const double mu = s.nu * s.rho;
  double num = 0, den = 0;
  for (int j = 0; j < res[1]; ++j) {
    double u = 0;
    for (int k = 0; k < res[2]; ++k) u += v.centred_velocity(0, {ic, j, k});
    u /= res[2];
    const double y = v.center({ic, j, 0})[1];
    const double ua = p.gradient / (2 * mu) * y * (s.gap - y);
    r.y.push_back(y);
    r.u_numeric.push_back(u);
    r.u_analytic.push_back(ua);
    num += (u - ua) * (u - ua);
    den += ua * ua;
  }
  r.profile_error = std::sqrt(num / den);
  return r;
}

}  // namespace portwin
