#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "portwin/core/error.hpp"

namespace portwin {

struct SieveFraction {
  double diameter = 0;       // [m]
  double mass_fraction = 0;  // in [0, 1]
};

/// Granulometric curve, sorted by diameter, largest first.
struct SieveCurve {
  std::vector<SieveFraction> fractions;

  double max_diameter() const { return fractions.empty() ? 0.0 : fractions.front().diameter; }
};

inline constexpr double kSieveSumTolerance = 1e-6;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool parse_number(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(t, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == t.size() && std::isfinite(out);
}

}  // namespace detail

/// Parses "diameter_mm,mass_fraction" rows. A first row that is not numeric
/// is taken as the header; blank lines and lines starting with '#' are
/// skipped. With `normalize` the fractions are rescaled to sum to one.
inline SieveCurve parse_sieve_curve(const std::string& text, bool normalize = false) {
  SieveCurve c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto comma = t.find(',');
    double d = 0, w = 0;
    const bool ok = comma != std::string::npos && t.find(',', comma + 1) == std::string::npos &&
                    detail::parse_number(t.substr(0, comma), d) && detail::parse_number(t.substr(comma + 1), w);
    if (!ok) {
      if (first) {
        first = false;
        continue;
      }
      throw ValidationError("sieve curve line " + std::to_string(line_no) + ": expected two numeric columns");
    }
    first = false;
    if (!(d > 0)) throw ValidationError("sieve curve line " + std::to_string(line_no) + ": diameter must be positive");
    if (w < 0 || w > 1) {
      throw ValidationError("sieve curve line " + std::to_string(line_no) + ": mass fraction outside [0, 1]");
    }
    c.fractions.push_back({d * 1e-3, w});
  }
  if (c.fractions.empty()) throw ValidationError("sieve curve has no fractions");
  double sum = 0;
  for (const auto& f : c.fractions) sum += f.mass_fraction;
  if (normalize) {
    if (!(sum > 0)) throw ValidationError("sieve curve fractions sum to zero");
    for (auto& f : c.fractions) f.mass_fraction /= sum;
  } else if (std::abs(sum - 1.0) > kSieveSumTolerance) {
    throw ValidationError("sieve curve fractions sum to " + std::to_string(sum) + ", expected 1");
  }
  std::stable_sort(c.fractions.begin(), c.fractions.end(),
                   [](const SieveFraction& a, const SieveFraction& b) { return a.diameter > b.diameter; });
  for (std::size_t i = 1; i < c.fractions.size(); ++i) {
    if (c.fractions[i].diameter == c.fractions[i - 1].diameter) {
      throw ValidationError("sieve curve lists a diameter twice");
    }
  }
  return c;
}

inline double sphere_volume_from_diameter(double d) { return std::numbers::pi * d * d * d / 6.0; }

/// N_i = floor(V * phi_s * w_i / (pi d_i^3 / 6)).
inline std::vector<std::int64_t> sphere_counts(const SieveCurve& c, double volume, double solid_fraction) {
  if (!(solid_fraction >= 0 && solid_fraction < 1)) throw PreconditionError("solid fraction must lie in [0, 1)");
  if (!(volume >= 0)) throw PreconditionError("region volume must be non-negative");
  std::vector<std::int64_t> n;
  for (const auto& f : c.fractions) {
    n.push_back(static_cast<std::int64_t>(
        std::floor(volume * solid_fraction * f.mass_fraction / sphere_volume_from_diameter(f.diameter))));
  }
  return n;
}

}  // namespace portwin
