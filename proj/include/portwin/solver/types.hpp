#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "portwin/core/error.hpp"
#include "portwin/core/geometry.hpp"
#include "portwin/grid/data_grid.hpp"

namespace portwin {

struct FluidProps {
  double nu = 1e-6;    // kinematic viscosity [m^2/s]
  double rho = 1000;   // density [kg/m^3]
  Vec3 gravity{0, 0, -9.81};
  Vec3 body_force{0, 0, 0};  // b in the momentum equation [m/s^2]

  double mu() const { return nu * rho; }

  friend bool operator==(const FluidProps&, const FluidProps&) = default;

  void validate() const {
    if (!(nu > 0) || !(rho > 0) || !std::isfinite(nu) || !std::isfinite(rho)) {
      throw ConfigError("viscosity and density must be positive");
    }
  }
};

enum class BoundaryKind : std::uint8_t { Inflow, Outflow, Wall, Slip };

inline CellFlag boundary_flag(BoundaryKind k) {
  switch (k) {
    case BoundaryKind::Inflow: return CellFlag::Inflow;
    case BoundaryKind::Outflow: return CellFlag::Outflow;
    case BoundaryKind::Wall: return CellFlag::Wall;
    case BoundaryKind::Slip: return CellFlag::Slip;
  }
  return CellFlag::Wall;
}

inline const char* boundary_name(BoundaryKind k) {
  switch (k) {
    case BoundaryKind::Inflow: return "inflow";
    case BoundaryKind::Outflow: return "outflow";
    case BoundaryKind::Wall: return "wall";
    case BoundaryKind::Slip: return "slip";
  }
  return "wall";
}

inline BoundaryKind parse_boundary_kind(const std::string& s) {
  if (s == "inflow") return BoundaryKind::Inflow;
  if (s == "outflow") return BoundaryKind::Outflow;
  if (s == "wall") return BoundaryKind::Wall;
  if (s == "slip") return BoundaryKind::Slip;
  throw ConfigError("unknown boundary kind '" + s + "'");
}

/// Inflow: Dirichlet velocity, Neumann pressure. Outflow: Neumann velocity,
/// Dirichlet pressure. Wall: no-slip, Neumann pressure. Slip: zero normal
/// velocity, zero tangential gradient.
struct BoundarySpec {
  Vec3 inflow{1, 0, 0};
  double p_out = 0;
  std::array<BoundaryKind, 6> faces{BoundaryKind::Inflow, BoundaryKind::Outflow,
                                    BoundaryKind::Wall,   BoundaryKind::Wall,
                                    BoundaryKind::Wall,   BoundaryKind::Wall};

  BoundaryKind kind(Face f) const { return faces[face_index(f)]; }

  friend bool operator==(const BoundarySpec&, const BoundarySpec&) = default;

  void validate() const {
    int outflow = 0;
    for (Face f : kAllFaces) {
      if (kind(f) == BoundaryKind::Outflow) {
        ++outflow;
        if (!face_is_high(f)) throw ConfigError("outflow is supported on E, N or T faces only");
      }
    }
    if (outflow == 0) throw ConfigError("at least one outflow face is required to fix the pressure level");
    for (double v : inflow) {
      if (!std::isfinite(v)) throw ConfigError("inflow velocity must be finite");
    }
    if (!std::isfinite(p_out)) throw ConfigError("outflow pressure must be finite");
  }
};

struct SimConfig {
  double cfl = 0.5;
  double poisson_tol = 1e-10;
  int max_vcycles = 200;
  int pre_sweeps = 6;
  int post_sweeps = 6;
  double dt_max = 1.0;
  double reynolds = 1.0;  // diagnostic only

  friend bool operator==(const SimConfig&, const SimConfig&) = default;

  void validate() const {
    if (!(cfl > 0 && cfl <= 1)) throw ConfigError("cfl coefficient must lie in (0, 1]");
    if (!(poisson_tol > 0)) throw ConfigError("poisson tolerance must be positive");
    if (pre_sweeps < 1 || post_sweeps < 1) throw ConfigError("smoother sweeps must be >= 1");
    if (max_vcycles < 1) throw ConfigError("max_vcycles must be >= 1");
    if (!(dt_max > 0)) throw ConfigError("dt_max must be positive");
  }
};

struct StepReport {
  std::int64_t step = 0;
  double dt = 0;
  double max_div = 0;
  int vcycles = 0;
  double residual = 0;
};

}  // namespace portwin
