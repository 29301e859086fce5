#pragma once

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "portwin/analysis/darcy.hpp"
#include "portwin/analysis/level_view.hpp"
#include "portwin/cli/log.hpp"
#include "portwin/io/checkpoint.hpp"
#include "portwin/io/run_config.hpp"
#include "portwin/porous/packing.hpp"
#include "portwin/porous/sieve.hpp"
#include "portwin/porous/voxelize.hpp"
#include "portwin/runtime/runner.hpp"
#include "portwin/runtime/simulation.hpp"
#include "portwin/services/collector.hpp"

namespace portwin::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;

inline const char* kUsage =
    "usage: portwin <command> [options]\n"
    "\n"
    "commands:\n"
    "  generate  build the initial state (sieve curve -> spheres -> cell flags) and persist it\n"
    "  run       step the simulation, serving windows and steering when endpoints are set\n"
    "  analyze   permeability series of a stored state at probe points\n"
    "  replay    serve a stored state over the window protocol without a solver\n"
    "\n"
    "Run 'portwin <command> --help' for the options of a command.\n"
    "Environment: PORTWIN_LOG=error|warn|info|debug\n";

/// Set from the SIGINT/SIGTERM handler; long-running commands poll it.
inline std::atomic<bool>& interrupt_flag() {
  static std::atomic<bool> flag{false};
  return flag;
}

namespace detail {

inline std::string resolve(const std::string& base_dir, const std::string& p) {
  if (p.empty()) return p;
  const std::filesystem::path path(p);
  if (path.is_absolute() || base_dir.empty()) return p;
  return (std::filesystem::path(base_dir) / path).string();
}

inline std::string read_text(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(std::string("cannot open ") + what + " '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct LoadedConfig {
  RunConfig cfg;
  std::string dir;
};

/// Relative paths inside a configuration file resolve against its directory.
inline LoadedConfig load_config(const std::string& path) {
  if (path.empty()) throw ConfigError("--config is required");
  LoadedConfig l;
  l.cfg = load_run_config(path);
  l.dir = std::filesystem::path(path).parent_path().string();
  for (std::string* f : {&l.cfg.porous.sieve_csv, &l.cfg.porous.spheres_csv, &l.cfg.run.initial_state,
                         &l.cfg.run.checkpoint, &l.cfg.run.step_log}) {
    *f = resolve(l.dir, *f);
  }
  return l;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fixed3(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

struct Generated {
  GridHierarchy hierarchy;
  SphereSet spheres;
  double porosity = 1;
};

/// Deterministic initial state: the uniform grid, plus the packed specimen
/// when a sieve curve is configured.
inline Generated generate_state(const LoadedConfig& l, Logger& log) {
  const RunConfig& c = l.cfg;
  Generated g;
  g.hierarchy = GridHierarchy::build(c.grid, c.run.uniform_depth);
  if (c.porous.sieve_csv.empty()) {
    log.info("no sieve curve configured; domain left empty");
    return g;
  }
  const SieveCurve curve =
      parse_sieve_curve(read_text(c.porous.sieve_csv, "sieve curve"), c.porous.normalize);
  const Box region = specimen_region(c.grid.domain(), c.porous.run_up_fraction);
  const auto counts = sphere_counts(curve, region.volume(), c.porous.solid_fraction);
  g.spheres = place_spheres(counts, curve, region, c.porous.seed, c.porous.solid_fraction,
                            c.porous.attempts_per_sphere);
  voxelize(g.hierarchy, g.spheres.spheres);
  g.porosity = porosity(g.hierarchy, g.hierarchy.complete_depth(), region);
  log.info("placed " + std::to_string(g.spheres.spheres.size()) + " spheres, solid fraction " +
           fmt(g.spheres.achieved_fraction) + ", voxel porosity " + fmt(g.porosity));
  return g;
}

inline void write_endpoint_file(const std::string& path, const std::vector<std::pair<std::string, Endpoint>>& eps) {
  if (path.empty()) return;
  std::ostringstream s;
  for (const auto& [name, e] : eps) s << name << '=' << e.str() << '\n';
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write endpoint file '" + path + "'");
    out << s.str();
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot write endpoint file '" + path + "'");
}

/// Opens the configured listeners and reports them on `out`.
inline std::vector<std::pair<std::string, Endpoint>> open_listeners(Collector& col, const std::string& listen,
                                                                    const std::string& ws_listen,
                                                                    std::ostream& out) {
  std::vector<std::pair<std::string, Endpoint>> eps;
  if (!listen.empty()) eps.emplace_back("tcp", col.listen_tcp(parse_endpoint(listen)));
  if (!ws_listen.empty()) eps.emplace_back("ws", col.listen_ws(parse_endpoint(ws_listen)));
  for (const auto& [name, e] : eps) out << "listening " << name << '=' << e.str() << '\n';
  out.flush();
  return eps;
}

inline std::vector<Vec3> parse_points_csv(const std::string& text) {
  std::vector<Vec3> pts;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = portwin::detail::trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    Vec3 p{0, 0, 0};
    bool numeric = cols.size() == 3;
    for (int a = 0; a < 3 && numeric; ++a) numeric = portwin::detail::parse_number(cols[a], p[a]);
    if (!numeric) {
      if (pts.empty() && lineno == 1) continue;  // header
      throw ValidationError("points line " + std::to_string(lineno) + " is not 'x,y,z'");
    }
    pts.push_back(p);
  }
  if (pts.empty()) throw ValidationError("points file has no points");
  return pts;
}

inline std::string step_row(const StepReport& r, double wall_ms) {
  return std::to_string(r.step) + ',' + fmt(r.dt) + ',' + fmt(r.max_div) + ',' + std::to_string(r.vcycles) + ',' +
         fmt(r.residual) + ',' + fixed3(wall_ms);
}

}  // namespace detail

struct GenerateOptions {
  std::string config;
  std::string out;
};

struct RunOptions {
  std::string config;
  std::optional<std::int64_t> steps;
  std::optional<int> workers;
  std::optional<std::string> listen;
  std::optional<std::string> ws_listen;
  std::optional<int> max_sessions;
  std::optional<std::string> checkpoint;
  std::optional<std::string> step_log;
  std::string endpoint_file;
};

struct AnalyzeOptions {
  std::string snapshot;
  std::string points;
  int probe = 8;
  std::string out;
  double run_up = kDefaultRunUpFraction;
};

struct ReplayOptions {
  std::string snapshot;
  std::string listen;
  std::string ws_listen;
  int max_sessions = 16;
  double duration = 0;
  std::string endpoint_file;
};

/// Initial state to a checkpoint plus the spheres CSV.
inline int cmd_generate(const GenerateOptions& o, std::ostream& out, Logger& log) {
  const auto l = detail::load_config(o.config);
  const RunConfig& c = l.cfg;
  detail::Generated g = detail::generate_state(l, log);
  std::string target = o.out;
  if (target.empty()) target = c.run.initial_state.empty() ? detail::resolve(l.dir, "initial.pwck") : c.run.initial_state;
  const std::string& spheres = c.porous.spheres_csv;
  write_spheres_csv(g.spheres.spheres, spheres);
  save_checkpoint(encode_checkpoint(g.hierarchy, c.fluid, c.boundaries, 0), target);
  out << "generated state=" << target << " spheres=" << spheres << " count=" << g.spheres.spheres.size()
      << " solid_fraction=" << detail::fmt(g.spheres.achieved_fraction) << " porosity=" << detail::fmt(g.porosity)
      << '\n';
  return kExitOk;
}

inline int cmd_run(const RunOptions& o, std::ostream& out, Logger& log) {
  auto l = detail::load_config(o.config);
  RunConfig& c = l.cfg;
  if (o.steps) c.run.steps = *o.steps;
  if (o.workers) c.run.workers = *o.workers;
  if (o.listen) c.services.listen = *o.listen;
  if (o.ws_listen) c.services.ws_listen = *o.ws_listen;
  if (o.max_sessions) c.services.max_sessions = *o.max_sessions;
  if (o.checkpoint) c.run.checkpoint = *o.checkpoint;
  if (o.step_log) c.run.step_log = *o.step_log;
  c.validate();

  GridHierarchy h;
  FluidProps fluid = c.fluid;
  BoundarySpec spec = c.boundaries;
  if (!c.run.initial_state.empty()) {
    SimulationState st = load_checkpoint(c.run.initial_state);
    if (!(st.hierarchy.config() == c.grid)) throw ConfigError("initial state grid differs from the configured grid");
    h = std::move(st.hierarchy);
    log.info("resuming from step " + std::to_string(st.step));
  } else {
    h = detail::generate_state(l, log).hierarchy;
  }
  Simulation sim(std::move(h), fluid, spec, c.sim, c.run.workers);
  log.info("compute depth " + std::to_string(sim.compute_depth()) + ", " +
           std::to_string(sim.hierarchy().at_depth(sim.compute_depth()).size()) + " blocks, " +
           std::to_string(sim.workers()) + " workers");

  const std::string& ckpt = c.run.checkpoint;
  const std::string& step_log_path = c.run.step_log;
  std::ofstream steps;
  if (!step_log_path.empty()) {
    steps.open(step_log_path, std::ios::trunc);
    if (!steps) throw IoError("cannot write step log '" + step_log_path + "'");
    steps << "step,dt,max_div,vcycles,residual,wall_ms\n";
  }

  SnapshotBuffer buffer;
  RunnerOptions ro;
  ro.snapshot_interval = c.run.snapshot_interval;
  SimulationRunner runner(sim, buffer, ro);
  CollectorOptions co;
  co.max_sessions = c.services.max_sessions;
  Collector collector(buffer, &runner, co);
  detail::write_endpoint_file(o.endpoint_file,
                              detail::open_listeners(collector, c.services.listen, c.services.ws_listen, out));

  std::atomic<bool> done{false};
  std::thread watcher([&] {
    while (!done.load()) {
      if (interrupt_flag().load()) {
        runner.request_stop();
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  });

  std::int64_t rows = 0;
  auto last = std::chrono::steady_clock::now();
  auto on_step = [&](const StepReport& r) {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - last).count();
    last = now;
    if (steps.is_open()) {
      steps << detail::step_row(r, ms) << '\n';
      steps.flush();
    }
    ++rows;
    log.debug("step " + std::to_string(r.step) + " dt=" + detail::fmt(r.dt) + " max_div=" + detail::fmt(r.max_div));
    if (c.run.checkpoint_interval > 0 && r.step % c.run.checkpoint_interval == 0) {
      save_checkpoint(encode_checkpoint(*sim.snapshot()), ckpt);
    }
  };
  try {
    runner.run(c.run.steps, on_step);
  } catch (...) {
    done.store(true);
    watcher.join();
    collector.stop();
    throw;
  }
  done.store(true);
  watcher.join();
  collector.stop();
  save_checkpoint(encode_checkpoint(*sim.snapshot()), ckpt);
  const bool interrupted = interrupt_flag().load();
  if (interrupted) log.warn("interrupted; state flushed at step " + std::to_string(sim.step_index()));
  out << "run steps=" << rows << " final_step=" << sim.step_index() << " checkpoint=" << ckpt
      << (interrupted ? " interrupted=1" : "") << '\n';
  return kExitOk;
}

inline int cmd_analyze(const AnalyzeOptions& o, std::ostream& out, Logger& log) {
  if (o.probe < 1) throw ConfigError("--probe must be >= 1 cell");
  const SimulationState st = load_checkpoint(o.snapshot);
  const auto pts = detail::parse_points_csv(detail::read_text(o.points, "points file"));
  const int depth = st.hierarchy.complete_depth();
  const LevelView view(st.hierarchy, depth);
  const double edge = o.probe * st.hierarchy.config().cell_size_at(depth)[0];
  const Box specimen = specimen_region(st.hierarchy.config().domain(), o.run_up);
  const PermeabilitySeries s = point_series(view, pts, edge, st.fluid.nu * st.fluid.rho, specimen);
  int failed = 0;
  for (const auto& d : s.samples) {
    if (!d.error.empty()) {
      ++failed;
      log.warn("point (" + detail::fmt(d.point[0]) + ", " + detail::fmt(d.point[1]) + ", " +
               detail::fmt(d.point[2]) + "): " + d.error);
    }
  }
  export_csv(s, o.out);
  out << "analyzed samples=" << s.samples.size() << " failed=" << failed << " mean_kx=" << detail::fmt(s.mean[0])
      << " std_kx=" << detail::fmt(s.stddev[0]) << " out=" << o.out << '\n';
  return kExitOk;
}

inline int cmd_replay(const ReplayOptions& o, std::ostream& out, Logger& log) {
  if (o.listen.empty() && o.ws_listen.empty()) throw ConfigError("replay needs --listen or --ws-listen");
  SimulationState st = load_checkpoint(o.snapshot);
  auto snap = std::make_shared<Snapshot>();
  snap->step = st.step;
  snap->compute_depth = st.hierarchy.complete_depth();
  snap->hierarchy = std::move(st.hierarchy);
  snap->props = st.fluid;
  snap->boundaries = st.boundaries;
  SnapshotBuffer buffer;
  buffer.publish(std::move(snap));
  CollectorOptions co;
  co.max_sessions = o.max_sessions;
  Collector collector(buffer, nullptr, co);
  detail::write_endpoint_file(o.endpoint_file, detail::open_listeners(collector, o.listen, o.ws_listen, out));
  log.info("replaying step " + std::to_string(st.step) + " from '" + o.snapshot + "'");
  const auto start = std::chrono::steady_clock::now();
  while (!interrupt_flag().load()) {
    if (o.duration > 0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= o.duration) {
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
  collector.stop();
  out << "replay windows_served=" << collector.windows_served() << '\n';
  return kExitOk;
}

/// Parses `args` (without the program name) and runs one command. Errors
/// become a single "error kind=<token> message=<text>" line on `err`.
inline int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  static const std::vector<std::string> commands = {"generate", "run", "analyze", "replay"};
  if (args.empty() || std::find(commands.begin(), commands.end(), args[0]) == commands.end()) {
    if (!args.empty() && (args[0] == "--help" || args[0] == "-h")) {
      out << kUsage;
      return kExitOk;
    }
    if (!args.empty()) err << "unknown command '" << args[0] << "'\n";
    err << kUsage;
    return kExitUsage;
  }

  CLI::App app{"portwin"};
  app.require_subcommand(1);
  GenerateOptions gen;
  RunOptions run;
  AnalyzeOptions ana;
  ReplayOptions rep;

  auto* g = app.add_subcommand("generate", "build and persist the initial state");
  g->add_option("--config", gen.config, "run configuration (JSON)")->required();
  g->add_option("--out", gen.out, "checkpoint path (default: run.initial_state or initial.pwck)");

  auto* r = app.add_subcommand("run", "step the simulation");
  r->add_option("--config", run.config, "run configuration (JSON)")->required();
  r->add_option("--steps", run.steps, "number of steps");
  r->add_option("--workers", run.workers, "worker contexts");
  r->add_option("--listen", run.listen, "host:port for raw TCP sessions");
  r->add_option("--ws-listen", run.ws_listen, "host:port for WebSocket sessions");
  r->add_option("--max-sessions", run.max_sessions, "concurrent session limit");
  r->add_option("--checkpoint", run.checkpoint, "checkpoint path");
  r->add_option("--step-log", run.step_log, "step report CSV path");
  r->add_option("--endpoint-file", run.endpoint_file, "write bound endpoints to this file");

  auto* a = app.add_subcommand("analyze", "permeability series of a stored state");
  a->add_option("--snapshot", ana.snapshot, "checkpoint file")->required();
  a->add_option("--points", ana.points, "CSV of probe centres x,y,z")->required();
  a->add_option("--probe", ana.probe, "probe edge in deepest-level cells")->capture_default_str();
  a->add_option("--out", ana.out, "output CSV")->required();
  a->add_option("--run-up", ana.run_up, "run-up fraction excluded from the specimen")->capture_default_str();

  auto* p = app.add_subcommand("replay", "serve a stored state");
  p->add_option("--snapshot", rep.snapshot, "checkpoint file")->required();
  p->add_option("--listen", rep.listen, "host:port for raw TCP sessions");
  p->add_option("--ws-listen", rep.ws_listen, "host:port for WebSocket sessions");
  p->add_option("--max-sessions", rep.max_sessions, "concurrent session limit")->capture_default_str();
  p->add_option("--duration", rep.duration, "seconds to serve; 0 serves until interrupted");
  p->add_option("--endpoint-file", rep.endpoint_file, "write bound endpoints to this file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error kind=usage message=" << e.what() << '\n';
    return kExitUsage;
  }

  Logger log(err, log_level_from_env());
  try {
    if (g->parsed()) return cmd_generate(gen, out, log);
    if (r->parsed()) return cmd_run(run, out, log);
    if (a->parsed()) return cmd_analyze(ana, out, log);
    return cmd_replay(rep, out, log);
  } catch (const Error& e) {
    err << "error kind=" << e.kind() << " message=" << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error kind=internal message=" << e.what() << '\n';
  }
  return kExitError;
}

}  // namespace portwin::cli
