#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "portwin/core/error.hpp"
#include "portwin/grid/config.hpp"
#include "portwin/porous/packing.hpp"
#include "portwin/porous/voxelize.hpp"
#include "portwin/solver/types.hpp"

namespace portwin {

inline constexpr int kRunConfigSchema = 1;

struct PorousInputs {
  std::string sieve_csv;  // empty: no specimen, plain channel
  bool normalize = false;
  double solid_fraction = 0.35;
  std::uint64_t seed = 1;
  double run_up_fraction = kDefaultRunUpFraction;
  std::int64_t attempts_per_sphere = kDefaultAttemptsPerSphere;
  std::string spheres_csv = "spheres.csv";

  friend bool operator==(const PorousInputs&, const PorousInputs&) = default;
};

struct ServiceEndpoints {
  std::string listen;     // "host:port" for raw TCP sessions; empty disables
  std::string ws_listen;  // "host:port" for WebSocket sessions; empty disables
  int max_sessions = 16;

  friend bool operator==(const ServiceEndpoints&, const ServiceEndpoints&) = default;
};

struct RunSettings {
  int uniform_depth = 1;  // depth built on an empty domain
  int workers = 1;
  std::int64_t steps = 100;
  int snapshot_interval = 1;     // steps between published snapshots
  int checkpoint_interval = 0;   // steps between checkpoints; 0 only at the end
  std::string initial_state;     // checkpoint to start from; empty builds the grid
  std::string checkpoint = "state.pwck";
  std::string step_log = "steps.csv";

  friend bool operator==(const RunSettings&, const RunSettings&) = default;
};

/// Declarative description of one simulation run.
struct RunConfig {
  int schema_version = kRunConfigSchema;
  GridConfig grid;
  FluidProps fluid;
  BoundarySpec boundaries;
  SimConfig sim;
  PorousInputs porous;
  ServiceEndpoints services;
  RunSettings run;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

  void validate() const {
    if (schema_version != kRunConfigSchema) {
      throw ConfigError("unsupported schema_version " + std::to_string(schema_version));
    }
    grid.validate();
    fluid.validate();
    boundaries.validate();
    sim.validate();
    if (run.uniform_depth < 0 || run.uniform_depth > grid.max_depth) {
      throw ConfigError("run.uniform_depth must lie in [0, grid.max_depth]");
    }
    if (run.workers < 1) throw ConfigError("run.workers must be >= 1");
    if (run.steps < 0) throw ConfigError("run.steps must be >= 0");
    if (run.snapshot_interval < 1) throw ConfigError("run.snapshot_interval must be >= 1");
    if (run.checkpoint_interval < 0) throw ConfigError("run.checkpoint_interval must be >= 0");
    if (!(porous.solid_fraction >= 0 && porous.solid_fraction < 1)) {
      throw ConfigError("porous.solid_fraction must lie in [0, 1)");
    }
    if (!(porous.run_up_fraction >= 0 && porous.run_up_fraction < 1)) {
      throw ConfigError("porous.run_up_fraction must lie in [0, 1)");
    }
    if (porous.attempts_per_sphere < 1) throw ConfigError("porous.attempts_per_sphere must be >= 1");
    if (services.max_sessions < 1) throw ConfigError("services.max_sessions must be >= 1");
  }
};

namespace detail {

using Json = nlohmann::ordered_json;

inline const char* kFaceKeys[6] = {"west", "east", "south", "north", "bottom", "top"};

inline void check_keys(const Json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + " must be a table");
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
  }
}

template <typename T>
void read_key(const Json& obj, const std::string& where, const char* key, T& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!it->is_number_integer()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError("");
    }
    out = it->template get<T>();
  } catch (const std::exception&) {
    throw ConfigError("key '" + where + "." + key + "' has the wrong type");
  }
}

template <typename A>
void read_triple(const Json& obj, const std::string& where, const char* key, A& out) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  using T = typename A::value_type;
  const bool ok = it->is_array() && it->size() == 3 &&
                  std::all_of(it->begin(), it->end(), [](const Json& v) {
                    return std::is_integral_v<T> ? v.is_number_integer() : v.is_number();
                  });
  if (!ok) throw ConfigError("key '" + where + "." + key + "' must be an array of 3 numbers");
  for (int a = 0; a < 3; ++a) out[a] = (*it)[a].template get<T>();
}

inline const Json& section(const Json& root, const char* name) {
  static const Json empty = Json::object();
  auto it = root.find(name);
  return it == root.end() ? empty : *it;
}

}  // namespace detail

/// Parses the JSON run configuration. Missing keys keep their defaults,
/// unknown keys and wrong types raise ConfigError, and the result is
/// validated.
inline RunConfig parse_run_config(const std::string& text) {
  using detail::Json;
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("run configuration is not valid JSON: ") + e.what());
  }
  detail::check_keys(root, "", {"schema_version", "grid", "fluid", "boundaries", "sim", "porous", "services", "run"});
  if (!root.contains("schema_version")) throw ConfigError("missing key 'schema_version'");
  RunConfig c;
  detail::read_key(root, "", "schema_version", c.schema_version);

  const Json& g = detail::section(root, "grid");
  detail::check_keys(g, "grid", {"domain_min", "domain_max", "root_refine", "sub_refine", "block_size", "max_depth"});
  detail::read_triple(g, "grid", "domain_min", c.grid.domain_min);
  detail::read_triple(g, "grid", "domain_max", c.grid.domain_max);
  detail::read_triple(g, "grid", "root_refine", c.grid.root_refine);
  detail::read_triple(g, "grid", "sub_refine", c.grid.sub_refine);
  detail::read_triple(g, "grid", "block_size", c.grid.block_size);
  detail::read_key(g, "grid", "max_depth", c.grid.max_depth);

  const Json& f = detail::section(root, "fluid");
  detail::check_keys(f, "fluid", {"nu", "rho", "gravity", "body_force"});
  detail::read_key(f, "fluid", "nu", c.fluid.nu);
  detail::read_key(f, "fluid", "rho", c.fluid.rho);
  detail::read_triple(f, "fluid", "gravity", c.fluid.gravity);
  detail::read_triple(f, "fluid", "body_force", c.fluid.body_force);

  const Json& b = detail::section(root, "boundaries");
  std::set<std::string> bkeys{"inflow", "p_out"};
  for (const char* k : detail::kFaceKeys) bkeys.insert(k);
  detail::check_keys(b, "boundaries", bkeys);
  detail::read_triple(b, "boundaries", "inflow", c.boundaries.inflow);
  detail::read_key(b, "boundaries", "p_out", c.boundaries.p_out);
  for (int i = 0; i < 6; ++i) {
    std::string kind;
    detail::read_key(b, "boundaries", detail::kFaceKeys[i], kind);
    if (!kind.empty()) c.boundaries.faces[i] = parse_boundary_kind(kind);
  }

  const Json& s = detail::section(root, "sim");
  detail::check_keys(s, "sim", {"cfl", "poisson_tol", "max_vcycles", "pre_sweeps", "post_sweeps", "dt_max", "reynolds"});
  detail::read_key(s, "sim", "cfl", c.sim.cfl);
  detail::read_key(s, "sim", "poisson_tol", c.sim.poisson_tol);
  detail::read_key(s, "sim", "max_vcycles", c.sim.max_vcycles);
  detail::read_key(s, "sim", "pre_sweeps", c.sim.pre_sweeps);
  detail::read_key(s, "sim", "post_sweeps", c.sim.post_sweeps);
  detail::read_key(s, "sim", "dt_max", c.sim.dt_max);
  detail::read_key(s, "sim", "reynolds", c.sim.reynolds);

  const Json& p = detail::section(root, "porous");
  detail::check_keys(p, "porous", {"sieve_csv", "normalize", "solid_fraction", "seed", "run_up_fraction",
                                   "attempts_per_sphere", "spheres_csv"});
  detail::read_key(p, "porous", "sieve_csv", c.porous.sieve_csv);
  detail::read_key(p, "porous", "normalize", c.porous.normalize);
  detail::read_key(p, "porous", "solid_fraction", c.porous.solid_fraction);
  detail::read_key(p, "porous", "seed", c.porous.seed);
  detail::read_key(p, "porous", "run_up_fraction", c.porous.run_up_fraction);
  detail::read_key(p, "porous", "attempts_per_sphere", c.porous.attempts_per_sphere);
  detail::read_key(p, "porous", "spheres_csv", c.porous.spheres_csv);

  const Json& e = detail::section(root, "services");
  detail::check_keys(e, "services", {"listen", "ws_listen", "max_sessions"});
  detail::read_key(e, "services", "listen", c.services.listen);
  detail::read_key(e, "services", "ws_listen", c.services.ws_listen);
  detail::read_key(e, "services", "max_sessions", c.services.max_sessions);

  const Json& r = detail::section(root, "run");
  detail::check_keys(r, "run", {"uniform_depth", "workers", "steps", "snapshot_interval", "checkpoint_interval",
                                "initial_state", "checkpoint", "step_log"});
  detail::read_key(r, "run", "uniform_depth", c.run.uniform_depth);
  detail::read_key(r, "run", "workers", c.run.workers);
  detail::read_key(r, "run", "steps", c.run.steps);
  detail::read_key(r, "run", "snapshot_interval", c.run.snapshot_interval);
  detail::read_key(r, "run", "checkpoint_interval", c.run.checkpoint_interval);
  detail::read_key(r, "run", "initial_state", c.run.initial_state);
  detail::read_key(r, "run", "checkpoint", c.run.checkpoint);
  detail::read_key(r, "run", "step_log", c.run.step_log);

  c.validate();
  return c;
}

/// Canonical text form: every key written, fixed key order, doubles in
/// shortest round-trip notation.
inline std::string serialize_run_config(const RunConfig& c) {
  using detail::Json;
  auto triple = [](const auto& v) { return Json::array({v[0], v[1], v[2]}); };
  Json root;
  root["schema_version"] = c.schema_version;
  root["grid"] = {{"domain_min", triple(c.grid.domain_min)}, {"domain_max", triple(c.grid.domain_max)},
                  {"root_refine", triple(c.grid.root_refine)}, {"sub_refine", triple(c.grid.sub_refine)},
                  {"block_size", triple(c.grid.block_size)}, {"max_depth", c.grid.max_depth}};
  root["fluid"] = {{"nu", c.fluid.nu}, {"rho", c.fluid.rho}, {"gravity", triple(c.fluid.gravity)},
                   {"body_force", triple(c.fluid.body_force)}};
  Json b;
  b["inflow"] = triple(c.boundaries.inflow);
  b["p_out"] = c.boundaries.p_out;
  for (int i = 0; i < 6; ++i) b[detail::kFaceKeys[i]] = boundary_name(c.boundaries.faces[i]);
  root["boundaries"] = b;
  root["sim"] = {{"cfl", c.sim.cfl},           {"poisson_tol", c.sim.poisson_tol}, {"max_vcycles", c.sim.max_vcycles},
                 {"pre_sweeps", c.sim.pre_sweeps}, {"post_sweeps", c.sim.post_sweeps}, {"dt_max", c.sim.dt_max},
                 {"reynolds", c.sim.reynolds}};
  root["porous"] = {{"sieve_csv", c.porous.sieve_csv},
                    {"normalize", c.porous.normalize},
                    {"solid_fraction", c.porous.solid_fraction},
                    {"seed", c.porous.seed},
                    {"run_up_fraction", c.porous.run_up_fraction},
                    {"attempts_per_sphere", c.porous.attempts_per_sphere},
                    {"spheres_csv", c.porous.spheres_csv}};
  root["services"] = {{"listen", c.services.listen},
                      {"ws_listen", c.services.ws_listen},
                      {"max_sessions", c.services.max_sessions}};
  root["run"] = {{"uniform_depth", c.run.uniform_depth},
                 {"workers", c.run.workers},
                 {"steps", c.run.steps},
                 {"snapshot_interval", c.run.snapshot_interval},
                 {"checkpoint_interval", c.run.checkpoint_interval},
                 {"initial_state", c.run.initial_state},
                 {"checkpoint", c.run.checkpoint},
                 {"step_log", c.run.step_log}};
  return root.dump(2) + "\n";
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open run configuration '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return parse_run_config(s.str());
}

inline void save_run_config(const RunConfig& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write run configuration '" + path + "'");
  out << serialize_run_config(c);
  if (!out) throw IoError("failed writing run configuration '" + path + "'");
}

}  // namespace portwin
