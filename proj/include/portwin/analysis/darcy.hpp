#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "portwin/analysis/level_view.hpp"
#include "portwin/core/error.hpp"

namespace portwin {

inline constexpr double kDefaultPressureGuard = 1e-12;  // [Pa]

struct Permeability {
  std::array<std::optional<double>, 3> k;  // [m^2], empty when undefined
  Vec3 mean_velocity{0, 0, 0};             // fluid-cell average [m/s]
  Vec3 pressure_drop{0, 0, 0};             // downstream minus upstream face [Pa]
  Vec3 length{0, 0, 0};                    // box extent actually sampled [m]
  std::int64_t fluid_cells = 0;
};

namespace detail {

// Pressure on a box face plane, averaged over the fluid cells of the inner
// layer. Each contributes the mean of itself and its outer neighbour, or its
// own value when the neighbour is solid. Outside the level the block ghost
// holds the boundary-condition value.
inline std::optional<double> face_pressure(const LevelView& v, int a, const Int3& lo, const Int3& hi, bool high) {
  const int inner = high ? hi[a] - 1 : lo[a];
  const int outer = high ? hi[a] : lo[a] - 1;
  const GridHierarchy& h = v.hierarchy();
  const Int3 n = h.config().block_size;
  double sum = 0;
  std::int64_t count = 0;
  Int3 tlo = lo, thi = hi;
  tlo[a] = inner;
  thi[a] = inner + 1;
  for (int k = tlo[2]; k < thi[2]; ++k)
    for (int j = tlo[1]; j < thi[1]; ++j)
      for (int i = tlo[0]; i < thi[0]; ++i) {
        const Int3 g{i, j, k};
        if (v.flag(g) != CellFlag::Fluid) continue;
        const double pin = v.pressure(g);
        Int3 go = g;
        go[a] = outer;
        double pout;
        if (v.inside(go)) {
          pout = v.flag(go) == CellFlag::Solid ? pin : v.pressure(go);
        } else {
          // Block ghost beyond the domain face.
          Int3 bc;
          for (int b = 0; b < kDim; ++b) bc[b] = g[b] / n[b];
          const auto uid = h.find(v.depth(), bc);
          const DataGrid& blk = h.block(*uid);
          Int3 l;
          for (int b = 0; b < kDim; ++b) l[b] = g[b] - bc[b] * n[b];
          l[a] = high ? n[a] : -1;
          pout = blk.flag(l[0], l[1], l[2]) == CellFlag::Solid ? pin : blk.p(l[0], l[1], l[2]);
        }
        sum += 0.5 * (pin + pout);
        ++count;
      }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

}  // namespace detail

/// Darcy permeability of the cells whose centres lie in `box`:
/// k_i = -u_i * mu * L_i / dp_i.
inline Permeability subdomain_permeability(const LevelView& v, const Box& box, double mu,
                                           double guard = kDefaultPressureGuard) {
  if (!(mu > 0)) throw PreconditionError("dynamic viscosity must be positive");
  const Box dom = v.hierarchy().config().domain();
  if (!box.valid()) throw RangeError("probe box is not a valid box");
  for (int a = 0; a < kDim; ++a) {
    const double tol = 1e-9 * (dom.max[a] - dom.min[a]);
    if (box.min[a] < dom.min[a] - tol || box.max[a] > dom.max[a] + tol) {
      throw RangeError("probe box extends outside the domain");
    }
  }
  const auto [lo, hi] = v.cell_range(box);
  for (int a = 0; a < kDim; ++a) {
    if (hi[a] <= lo[a]) throw RangeError("probe box contains no cell centre");
  }

  Permeability out;
  Vec3 sum{0, 0, 0};
  for (int k = lo[2]; k < hi[2]; ++k)
    for (int j = lo[1]; j < hi[1]; ++j)
      for (int i = lo[0]; i < hi[0]; ++i) {
        const Int3 g{i, j, k};
        if (v.flag(g) != CellFlag::Fluid) continue;
        for (int a = 0; a < kDim; ++a) sum[a] += v.centred_velocity(a, g);
        ++out.fluid_cells;
      }
  for (int a = 0; a < kDim; ++a) {
    out.length[a] = (hi[a] - lo[a]) * v.cell_size()[a];
    if (out.fluid_cells == 0) continue;
    out.mean_velocity[a] = sum[a] / static_cast<double>(out.fluid_cells);
    const auto up = detail::face_pressure(v, a, lo, hi, false);
    const auto down = detail::face_pressure(v, a, lo, hi, true);
    if (!up || !down) continue;
    out.pressure_drop[a] = *down - *up;
    if (std::abs(out.pressure_drop[a]) > guard) {
      out.k[a] = -out.mean_velocity[a] * mu * out.length[a] / out.pressure_drop[a];
    }
  }
  return out;
}

/// K = k * rho * g / mu.
inline double hydraulic_conductivity(double k, double rho, double g, double mu) {
  if (!(mu > 0)) throw PreconditionError("dynamic viscosity must be positive");
  return k * rho * g / mu;
}

/// Darcy velocity from a hydraulic head difference [m] over length L.
inline double darcy_velocity(double conductivity, double head_drop, double length) {
  if (!(length > 0)) throw PreconditionError("length must be positive");
  return -conductivity * head_drop / length;
}

struct DarcySample {
  Vec3 point{0, 0, 0};
  double edge = 0;
  Vec3 mean_velocity{0, 0, 0};
  Vec3 pressure_drop{0, 0, 0};
  std::array<std::optional<double>, 3> k;
  std::string error;  // set when the probe could not be evaluated
};

struct PermeabilitySeries {
  std::vector<DarcySample> samples;
  Vec3 mean{0, 0, 0};
  Vec3 stddev{0, 0, 0};  // population
  std::array<int, 3> excluded{0, 0, 0};
};

/// Mean and population deviation of every direction over the samples in
/// which it is defined.
inline void compute_statistics(PermeabilitySeries& s) {
  for (int a = 0; a < kDim; ++a) {
    double sum = 0;
    int n = 0;
    for (const auto& d : s.samples) {
      if (d.k[a]) {
        sum += *d.k[a];
        ++n;
      }
    }
    s.excluded[a] = static_cast<int>(s.samples.size()) - n;
    if (n == 0) {
      s.mean[a] = std::nan("");
      s.stddev[a] = std::nan("");
      continue;
    }
    const double mean = sum / n;
    double var = 0;
    for (const auto& d : s.samples) {
      if (d.k[a]) var += (*d.k[a] - mean) * (*d.k[a] - mean);
    }
    s.mean[a] = mean;
    s.stddev[a] = std::sqrt(var / n);
  }
}

/// One cubic probe of edge `edge` centred on every point, in input order.
/// Probes not fully inside `specimen` are annotated and left undefined.
inline PermeabilitySeries point_series(const LevelView& v, const std::vector<Vec3>& points, double edge,
                                       double mu, const Box& specimen,
                                       double guard = kDefaultPressureGuard) {
  if (!(edge > 0)) throw PreconditionError("probe edge must be positive");
  PermeabilitySeries s;
  for (const Vec3& p : points) {
    DarcySample d;
    d.point = p;
    d.edge = edge;
    const Box probe{{p[0] - edge / 2, p[1] - edge / 2, p[2] - edge / 2},
                    {p[0] + edge / 2, p[1] + edge / 2, p[2] + edge / 2}};
    bool inside = true;
    for (int a = 0; a < kDim; ++a) {
      if (probe.min[a] < specimen.min[a] || probe.max[a] > specimen.max[a]) inside = false;
    }
    if (!inside) {
      d.error = "probe box outside specimen";
    } else {
      try {
        const Permeability k = subdomain_permeability(v, probe, mu, guard);
        d.mean_velocity = k.mean_velocity;
        d.pressure_drop = k.pressure_drop;
        d.k = k.k;
      } catch (const Error& e) {
        d.error = e.what();
      }
    }
    s.samples.push_back(std::move(d));
  }
  compute_statistics(s);
  return s;
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_optional(const std::optional<double>& v) { return v ? fmt_double(*v) : ""; }

inline std::string sample_flags(const DarcySample& d) {
  if (!d.error.empty()) {
    std::string e = d.error;
    for (char& c : e) {
      if (c == ',' || c == '\n' || c == '"') c = ' ';
    }
    return "error: " + e;
  }
  std::string f;
  static constexpr const char* kAxis[3] = {"x", "y", "z"};
  for (int a = 0; a < kDim; ++a) {
    if (!d.k[a]) f += std::string(f.empty() ? "" : " ") + "undefined_" + kAxis[a];
  }
  return f.empty() ? "ok" : f;
}

}  // namespace detail

/// Header, one row per sample, then mean and standard deviation rows.
inline std::string series_csv(const PermeabilitySeries& s) {
  if (s.samples.empty()) throw PreconditionError("cannot export an empty series");
  std::string out = "x,y,z,k_x,k_y,k_z,flags\n";
  for (const DarcySample& d : s.samples) {
    out += detail::fmt_double(d.point[0]) + "," + detail::fmt_double(d.point[1]) + "," +
           detail::fmt_double(d.point[2]) + "," + detail::fmt_optional(d.k[0]) + "," +
           detail::fmt_optional(d.k[1]) + "," + detail::fmt_optional(d.k[2]) + "," + detail::sample_flags(d) + "\n";
  }
  auto stat_row = [&](const char* name, const Vec3& v) {
    out += std::string(name) + ",,," + detail::fmt_double(v[0]) + "," + detail::fmt_double(v[1]) + "," +
           detail::fmt_double(v[2]) + ",excluded " + std::to_string(s.excluded[0]) + " " +
           std::to_string(s.excluded[1]) + " " + std::to_string(s.excluded[2]) + "\n";
  };
  stat_row("mean", s.mean);
  stat_row("std", s.stddev);
  return out;
}

inline void export_csv(const PermeabilitySeries& s, const std::string& path) {
  const std::string text = series_csv(s);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f << text;
  if (!f) throw IoError("write failed for " + path);
}

}  // namespace portwin
