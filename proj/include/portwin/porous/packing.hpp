#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "portwin/core/error.hpp"
#include "portwin/core/geometry.hpp"
#include "portwin/porous/sieve.hpp"

namespace portwin {

struct Sphere {
  Vec3 center{0, 0, 0};
  double radius = 0;

  friend bool operator==(const Sphere&, const Sphere&) = default;
};

struct SphereSet {
  std::vector<Sphere> spheres;
  std::uint64_t seed = 0;
  double target_fraction = 0;
  double achieved_fraction = 0;  // sphere volume / region volume
};

inline constexpr std::int64_t kDefaultAttemptsPerSphere = 5000;

namespace detail {

// Uniform hash grid over sphere centres; cells are one largest diameter wide
// so overlap candidates lie in the 27 surrounding cells.
class SphereGrid {
 public:
  SphereGrid(const Box& region, double cell) : min_(region.min), cell_(cell) {
    for (int a = 0; a < kDim; ++a) {
      dims_[a] = std::max(1, static_cast<int>(std::ceil((region.max[a] - region.min[a]) / cell)));
    }
  }

  void insert(const Sphere& s, int id) { cells_[key(coord(s.center))].push_back(id); }

  template <typename Fn>
  bool any_near(const Vec3& c, Fn&& hit) const {
    const Int3 k = coord(c);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const Int3 q{k[0] + dx, k[1] + dy, k[2] + dz};
          if (q[0] < 0 || q[1] < 0 || q[2] < 0 || q[0] >= dims_[0] || q[1] >= dims_[1] || q[2] >= dims_[2]) continue;
          auto it = cells_.find(key(q));
          if (it == cells_.end()) continue;
          for (int id : it->second) {
            if (hit(id)) return true;
          }
        }
    return false;
  }

 private:
  Int3 coord(const Vec3& p) const {
    Int3 k;
    for (int a = 0; a < kDim; ++a) k[a] = std::clamp(static_cast<int>((p[a] - min_[a]) / cell_), 0, dims_[a] - 1);
    return k;
  }
  std::int64_t key(const Int3& k) const {
    return k[0] + static_cast<std::int64_t>(dims_[0]) * (k[1] + static_cast<std::int64_t>(dims_[1]) * k[2]);
  }

  Vec3 min_;
  double cell_;
  Int3 dims_{1, 1, 1};
  std::unordered_map<std::int64_t, std::vector<int>> cells_;
};

// 53-bit uniform double in [0, 1), independent of the standard library's
// distribution implementation.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

inline double spheres_volume(const std::vector<Sphere>& s) {
  double v = 0;
  for (const Sphere& x : s) v += 4.0 / 3.0 * std::numbers::pi * x.radius * x.radius * x.radius;
  return v;
}

/// Random sequential placement, largest fraction first. Centres are drawn
/// uniformly from the region shrunk by the radius; a proposal is rejected
/// when it overlaps a placed sphere.
inline SphereSet place_spheres(const std::vector<std::int64_t>& counts, const SieveCurve& curve, const Box& region,
                               std::uint64_t seed, double target_fraction = 0,
                               std::int64_t attempts_per_sphere = kDefaultAttemptsPerSphere) {
  if (counts.size() != curve.fractions.size()) throw PreconditionError("one count per sieve fraction required");
  if (!region.valid()) throw PreconditionError("placement region is not a valid box");
  std::vector<std::size_t> order(counts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return curve.fractions[a].diameter > curve.fractions[b].diameter;
  });
  std::int64_t total = 0;
  double dmax = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 0) throw PreconditionError("sphere counts must be non-negative");
    total += counts[i];
    if (counts[i] > 0) dmax = std::max(dmax, curve.fractions[i].diameter);
  }

  SphereSet out;
  out.seed = seed;
  out.target_fraction = target_fraction;
  if (total == 0) return out;

  const std::int64_t budget = attempts_per_sphere * total;
  std::mt19937_64 rng(seed);
  detail::SphereGrid grid(region, dmax);
  std::int64_t attempts = 0;
  auto fail = [&](double d) {
    out.achieved_fraction = spheres_volume(out.spheres) / region.volume();
    throw PackingInfeasible("packing infeasible: placed " + std::to_string(out.spheres.size()) + " of " +
                            std::to_string(total) + " spheres (stuck at diameter " + std::to_string(d * 1e3) +
                            " mm), solid fraction reached " + std::to_string(out.achieved_fraction));
  };
  for (std::size_t fi : order) {
    const double r = curve.fractions[fi].diameter / 2;
    for (int a = 0; a < kDim; ++a) {
      if (region.max[a] - region.min[a] < 2 * r && counts[fi] > 0) fail(2 * r);
    }
    for (std::int64_t n = 0; n < counts[fi]; ++n) {
      for (;;) {
        if (attempts >= budget) fail(2 * r);
        ++attempts;
        Vec3 c;
        for (int a = 0; a < kDim; ++a) {
          c[a] = region.min[a] + r + detail::unit_uniform(rng) * (region.max[a] - region.min[a] - 2 * r);
        }
        const bool overlap = grid.any_near(c, [&](int id) {
          const Sphere& o = out.spheres[static_cast<std::size_t>(id)];
          const Vec3 d = c - o.center;
          const double s = r + o.radius;
          return dot(d, d) < s * s;
        });
        if (overlap) continue;
        grid.insert({c, r}, static_cast<int>(out.spheres.size()));
        out.spheres.push_back({c, r});
        break;
      }
    }
  }
  out.achieved_fraction = spheres_volume(out.spheres) / region.volume();
  return out;
}

/// Exhaustive pairwise check; returns the first offending pair or {-1,-1}.
inline std::pair<int, int> find_overlap(const std::vector<Sphere>& s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      const Vec3 d = s[i].center - s[j].center;
      const double r = s[i].radius + s[j].radius;
      if (dot(d, d) < r * r) return {static_cast<int>(i), static_cast<int>(j)};
    }
  }
  return {-1, -1};
}

inline std::string spheres_csv(const std::vector<Sphere>& s) {
  std::string out = "cx,cy,cz,r\n";
  char buf[128];
  for (const Sphere& x : s) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", x.center[0], x.center[1], x.center[2], x.radius);
    out += buf;
  }
  return out;
}

inline std::vector<Sphere> parse_spheres_csv(const std::string& text) {
  std::vector<Sphere> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (line_no == 1 && t.rfind("cx", 0) == 0) continue;
    double v[4];
    std::size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
      const auto next = i < 3 ? t.find(',', pos) : std::string::npos;
      if (i < 3 && next == std::string::npos) throw ValidationError("spheres line " + std::to_string(line_no) + ": expected 4 columns");
      if (!detail::parse_number(t.substr(pos, next == std::string::npos ? std::string::npos : next - pos), v[i])) {
        throw ValidationError("spheres line " + std::to_string(line_no) + ": non-numeric value");
      }
      pos = next + 1;
    }
    if (!(v[3] > 0)) throw ValidationError("spheres line " + std::to_string(line_no) + ": radius must be positive");
    out.push_back({{v[0], v[1], v[2]}, v[3]});
  }
  return out;
}

inline void write_spheres_csv(const std::vector<Sphere>& s, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f << spheres_csv(s);
  if (!f) throw IoError("write failed for " + path);
}

inline std::vector<Sphere> read_spheres_csv(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_spheres_csv(ss.str());
}

}  // namespace portwin
