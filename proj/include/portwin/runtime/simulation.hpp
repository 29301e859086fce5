#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "portwin/core/error.hpp"
#include "portwin/exchange/compile.hpp"
#include "portwin/exchange/nbh.hpp"
#include "portwin/exchange/partition.hpp"
#include "portwin/exchange/plan.hpp"
#include "portwin/exchange/transfer.hpp"
#include "portwin/grid/hierarchy.hpp"
#include "portwin/solver/kernels.hpp"
#include "portwin/solver/poisson.hpp"
#include "portwin/solver/setup.hpp"
#include "portwin/solver/types.hpp"

namespace portwin {

/// Read-only copy of the whole simulation state at one step boundary.
struct Snapshot {
  std::int64_t step = 0;
  GridHierarchy hierarchy;
  FluidProps props;
  BoundarySpec boundaries;
  int compute_depth = 0;
};

enum class SteeringKind : std::uint8_t {
  SetInflow = 0,
  SetViscosity = 1,
  RefineRegion = 2,
  Pause = 3,
  Resume = 4,
};

struct SteeringCommand {
  SteeringKind kind = SteeringKind::Pause;
  Vec3 vector{0, 0, 0};
  double scalar = 0;
  Box box;
};

struct SteeringOutcome {
  bool accepted = false;
  std::int64_t effective_step = 0;  // first step computed with the change
  std::string reason;
  std::vector<Uid> created;  // grids added by a refinement
};

/// Bounds for steering parameters.
struct SteeringLimits {
  double max_inflow = 100.0;       // |component| [m/s]
  double min_viscosity = 1e-9;     // [m^2/s]
  double max_viscosity = 1e3;
};

/// The distributed time stepper. Blocks of the compute depth (the deepest
/// complete level) are split over worker contexts along the Morton curve;
/// all inter-worker data moves through the cluster transport. Coarser
/// levels receive restricted copies after every step, deeper (refined)
/// blocks receive injected copies.
class Simulation {
 public:
  enum FieldId : int { kUx = 0, kUy = 1, kUz = 2, kP = 3 };

  Simulation(GridHierarchy hierarchy, FluidProps props, BoundarySpec spec, SimConfig cfg, int workers,
             std::unique_ptr<Transport> transport = nullptr)
      : h_(std::move(hierarchy)), props_(props), spec_(spec), cfg_(cfg), access_(*this) {
    props_.validate();
    spec_.validate();
    cfg_.validate();
    depth_ = h_.complete_depth();
    if (depth_ < 0) throw PreconditionError("hierarchy has no complete level");
    cluster_ = std::make_unique<Cluster>(workers, std::move(transport));
    partition_ = partition_blocks(h_, h_.at_depth(depth_), workers);

    pockets_removed_ = remove_isolated_pockets(h_, depth_, spec_);
    fill_ghost_flags(h_, depth_, spec_);
    step_ = h_.block(h_.at_depth(depth_).front()).step;
    have_history_ = step_ > 0;

    rebuild_topology();
    poisson_ = std::make_unique<PoissonSolver>(*cluster_, h_, repo_snapshot_, depth_, owner_, spec_, cfg_);
    ghosts_valid_ = false;
    fill_velocity_ghosts();
    fill_pressure_ghosts();
    propagate_levels();
  }

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  const GridHierarchy& hierarchy() const { return h_; }
  const FluidProps& props() const { return props_; }
  const BoundarySpec& boundaries() const { return spec_; }
  const SimConfig& config() const { return cfg_; }
  int compute_depth() const { return depth_; }
  std::int64_t step_index() const { return step_; }
  int workers() const { return cluster_->workers(); }
  const Partition& partition() const { return partition_; }
  const NbhServer& nbh() const { return nbh_; }
  Cluster& cluster() { return *cluster_; }
  std::int64_t pockets_removed() const { return pockets_removed_; }
  const std::map<Uid, int>& owners() const { return owner_; }

  /// One projection step.
  StepReport step() {
    if (!ghosts_valid_) fill_velocity_ghosts();
    const Vec3 hc = h_.config().cell_size_at(depth_);
    const double dt = stable_dt(max_velocity(), hc, props_.nu, cfg_);
    const bool first = !have_history_;

    run_compute([&](int b, DataGrid& g) {
      FaceFields& H = scratch_[b];
      explicit_term(g, hc, props_, H);
      predictor_step(g, H, dt, first);
      for (int a = 0; a < 3; ++a) std::swap(g.h_prev[a], H[a]);
    });
    fill_velocity_ghosts();

    const double scale = props_.rho / dt;
    run_compute([&](int b, DataGrid& g) {
      ScalarField& div = scratch_[b][0];
      divergence(g, hc, div);
      ScalarField& rhs = poisson_->field(b, PoissonSolver::kRhs);
      ScalarField& x = poisson_->field(b, PoissonSolver::kPx);
      const ScalarField& dir = poisson_->field(b, PoissonSolver::kDir);
      const ScalarField& mask = poisson_->field(b, PoissonSolver::kMask);
      detail::for_interior(g.cells(), [&](int i, int j, int k) {
        const std::size_t idx = g.p.index(i, j, k);
        rhs[idx] = mask[idx] != 0 ? dir[idx] - scale * div[idx] : 0.0;
        x[idx] = mask[idx] != 0 ? g.p[idx] : 0.0;
      });
    });
    const PoissonResult pr = poisson_->solve();
    run_compute([&](int b, DataGrid& g) {
      const ScalarField& x = poisson_->field(b, PoissonSolver::kPx);
      detail::for_interior(g.cells(), [&](int i, int j, int k) {
        const std::size_t idx = g.p.index(i, j, k);
        g.p[idx] = x[idx];
      });
    });
    fill_pressure_ghosts();
    run_compute([&](int, DataGrid& g) { correct_velocity(g, hc, dt, props_.rho); });
    fill_velocity_ghosts();

    std::vector<double> part(blocks_.size(), 0.0);
    run_compute([&](int b, DataGrid& g) {
      ScalarField& div = scratch_[b][0];
      divergence(g, hc, div);
      double m = 0;
      detail::for_interior(g.cells(), [&](int i, int j, int k) {
        const double v = std::abs(div(i, j, k));
        if (!(v <= m)) m = v;  // propagates NaN
      });
      part[b] = m;
    });
    double max_div = 0;
    for (double v : part) max_div = std::isnan(v) || std::isnan(max_div) ? NAN : std::max(max_div, v);
    if (!std::isfinite(max_div)) {
      throw SolverFailure("non-finite velocity divergence at step " + std::to_string(step_ + 1) +
                          " (dt " + std::to_string(dt) + ")");
    }

    ++step_;
    have_history_ = true;
    for (auto& [uid, d] : h_.data()) d.step = step_;
    propagate_levels();

    StepReport r;
    r.step = step_;
    r.dt = dt;
    r.max_div = max_div;
    r.vcycles = pr.iterations;
    r.residual = pr.residual;
    last_dt_ = dt;
    return r;
  }

  double last_dt() const { return last_dt_; }

  /// Largest |u| per component over fluid faces of the compute level.
  Vec3 max_velocity() {
    std::vector<Vec3> part(blocks_.size(), Vec3{0, 0, 0});
    run_compute([&](int b, DataGrid& g) { part[b] = max_abs_velocity(g); });
    Vec3 m{0, 0, 0};
    for (const Vec3& v : part)
      for (int a = 0; a < 3; ++a) m[a] = std::max(m[a], v[a]);
    return m;
  }

  /// Applies one steering command; must be called between steps.
  SteeringOutcome apply_steering(const SteeringCommand& cmd, const SteeringLimits& lim = {}) {
    SteeringOutcome out;
    out.effective_step = step_ + 1;
    auto reject = [&](std::string why) {
      out.accepted = false;
      out.reason = std::move(why);
      return out;
    };
    switch (cmd.kind) {
      case SteeringKind::SetInflow:
        for (double v : cmd.vector) {
          if (!std::isfinite(v)) return reject("inflow velocity must be finite");
          if (std::abs(v) > lim.max_inflow) {
            return reject("inflow component " + std::to_string(v) + " exceeds bound " + std::to_string(lim.max_inflow));
          }
        }
        spec_.inflow = cmd.vector;
        ghosts_valid_ = false;
        break;
      case SteeringKind::SetViscosity:
        if (!std::isfinite(cmd.scalar) || cmd.scalar < lim.min_viscosity || cmd.scalar > lim.max_viscosity) {
          return reject("viscosity " + std::to_string(cmd.scalar) + " outside [" + std::to_string(lim.min_viscosity) +
                        ", " + std::to_string(lim.max_viscosity) + "]");
        }
        props_.nu = cmd.scalar;
        break;
      case SteeringKind::RefineRegion: {
        if (!cmd.box.valid()) return reject("refine region is not a valid box");
        const Box clipped = cmd.box.intersect(h_.config().domain());
        if (!clipped.valid() || !clipped.overlaps(h_.config().domain())) return reject("refine region lies outside the domain");
        std::vector<Uid> targets;
        bool blocked = false;
        for (Uid leaf : h_.leaves()) {
          const LogicalGrid& g = h_.grid(leaf);
          if (!g.bbox.overlaps(clipped)) continue;
          if (g.depth >= h_.config().max_depth) {
            blocked = true;
            continue;
          }
          targets.push_back(leaf);
        }
        if (targets.empty()) {
          return reject(blocked ? "refinement beyond max_depth " + std::to_string(h_.config().max_depth)
                                : "no leaf grid intersects the refine region");
        }
        for (Uid t : targets) {
          auto kids = h_.refine(t);
          out.created.insert(out.created.end(), kids.begin(), kids.end());
        }
        rebuild_topology();
        propagate_levels();
        break;
      }
      case SteeringKind::Pause:
      case SteeringKind::Resume:
        out.effective_step = step_ + 1;
        break;
    }
    out.accepted = true;
    return out;
  }

  std::shared_ptr<const Snapshot> snapshot() const {
    auto s = std::make_shared<Snapshot>();
    s->step = step_;
    s->hierarchy = h_;
    s->props = props_;
    s->boundaries = spec_;
    s->compute_depth = depth_;
    return s;
  }

 private:
  class Access final : public FieldAccess {
   public:
    explicit Access(Simulation& s) : s_(s) {}
    ScalarField& field(int level, int block, int f) override {
      DataGrid& g = *s_.by_depth_[level][block];
      return f == kP ? g.p : g.vel[f];
    }

   private:
    Simulation& s_;
  };

  template <typename Fn>
  void run_compute(Fn&& fn) {
    cluster_->run([&](int w) {
      for (int b : compute_of_[w]) fn(b, *by_depth_[depth_][b]);
    });
  }

  /// Ownership, neighbourhood registration and transfer schedules for the
  /// current topology.
  void rebuild_topology() {
    const int depths = h_.depth_count();
    by_depth_.assign(depths, {});
    index_.clear();
    for (int d = 0; d < depths; ++d) {
      const auto& ids = h_.at_depth(d);
      for (std::size_t b = 0; b < ids.size(); ++b) {
        by_depth_[d].push_back(&h_.block(ids[b]));
        index_[ids[b]] = {d, static_cast<int>(b)};
      }
    }
    owner_.clear();
    for (Uid u : h_.at_depth(depth_)) owner_[u] = partition_.worker_of(u);
    for (int d = depth_ - 1; d >= 0; --d) {
      for (Uid u : h_.at_depth(d)) owner_[u] = owner_.at(h_.grid(u).children.front());
    }
    for (int d = depth_ + 1; d < depths; ++d) {
      for (Uid u : h_.at_depth(d)) owner_[u] = owner_.at(*h_.grid(u).parent);
    }
    Ownership owners(static_cast<std::size_t>(depths));
    for (int d = 0; d < depths; ++d) {
      for (Uid u : h_.at_depth(d)) owners[d].push_back(owner_.at(u));
    }

    NbhServer fresh;
    for (const auto& [uid, g] : h_.grids()) {
      fresh.register_grid(uid, g.bbox, g.depth, g.parent, g.block_coords, owner_.at(uid));
    }
    nbh_.with_repository([&](NbhRepository& r) { r = fresh.copy(); });
    repo_snapshot_ = nbh_.copy();

    blocks_ = h_.at_depth(depth_);
    compute_of_.assign(static_cast<std::size_t>(workers()), {});
    for (std::size_t b = 0; b < blocks_.size(); ++b) compute_of_[owner_.at(blocks_[b])].push_back(static_cast<int>(b));
    boundary_.clear();
    for (Uid u : blocks_) boundary_.push_back(block_boundary(h_, u, spec_));
    if (scratch_.size() != blocks_.size()) {
      scratch_.clear();
      for (std::size_t b = 0; b < blocks_.size(); ++b) scratch_.push_back(make_face_fields(h_.config().block_size));
    }

    const Int3 n = h_.config().block_size;
    const BlockLocator locate = [&](Uid u) { return index_.at(u); };
    const ExchangePlan horizontal = build_exchange_plan(repo_snapshot_, ExchangePhase::Horizontal, n, depth_);
    for (int a = 0; a < 3; ++a) {
      halo_[a] = TransferSet(compile_face_transfers(horizontal, locate, n, true, a), owners, workers());
    }

    // Restriction towards the root, one set per target depth.
    restrict_cells_.assign(static_cast<std::size_t>(std::max(depth_, 0)), {});
    restrict_faces_.assign(static_cast<std::size_t>(std::max(depth_, 0)), {});
    for (int d = depth_ - 1; d >= 0; --d) {
      const Int3 r = h_.config().ratio_into(d + 1);
      std::vector<Transfer> cells;
      std::array<std::vector<Transfer>, 3> faces;
      for (Uid child : h_.at_depth(d + 1)) {
        const LogicalGrid& cg = h_.grid(child);
        const LogicalGrid& pg = h_.grid(*cg.parent);
        Int3 off;
        for (int a = 0; a < 3; ++a) off[a] = (cg.block_coords[a] - pg.block_coords[a] * r[a]) * (n[a] / r[a]);
        Transfer base;
        std::tie(base.src_level, base.src_block) = index_.at(child);
        std::tie(base.dst_level, base.dst_block) = index_.at(pg.uid);
        base.src_uid = child;
        base.dst_uid = pg.uid;
        Transfer t = base;
        fill_restrict_indices(t, n, n, r, off);
        cells.push_back(std::move(t));
        for (int a = 0; a < 3; ++a) {
          Transfer tf = base;
          fill_face_restrict_indices(tf, n, n, r, off, a);
          faces[a].push_back(std::move(tf));
        }
      }
      restrict_cells_[d] = TransferSet(std::move(cells), owners, workers());
      for (int a = 0; a < 3; ++a) restrict_faces_[d][a] = TransferSet(std::move(faces[a]), owners, workers());
    }

    // Ghost filling of refined blocks deeper than the compute level.
    deep_halo_.clear();
    for (int d = depth_ + 1; d < depths; ++d) {
      const ExchangePlan hp = build_exchange_plan(repo_snapshot_, ExchangePhase::Horizontal, n, d);
      const ExchangePlan tp = build_exchange_plan(repo_snapshot_, ExchangePhase::TopDown, n, d);
      auto transfers = compile_face_transfers(hp, locate, n, false);
      auto cf = compile_coarse_fine_transfers(
          tp, locate, [&](Uid u) { return h_.grid(u).bbox; }, n);
      transfers.insert(transfers.end(), std::make_move_iterator(cf.begin()), std::make_move_iterator(cf.end()));
      deep_halo_.emplace_back(std::move(transfers), owners, workers());
    }
    deep_of_.assign(static_cast<std::size_t>(workers()), {});
    for (int d = depth_ + 1; d < depths; ++d) {
      for (Uid u : h_.at_depth(d)) deep_of_[owner_.at(u)].push_back(u);
    }
    ghosts_valid_ = false;
  }

  void fill_velocity_ghosts() {
    static constexpr int kVel[3] = {kUx, kUy, kUz};
    for (int a = 0; a < 3; ++a) {
      cluster_->execute(halo_[a], access_, std::span<const int>(kVel, 3));
      run_compute([&](int b, DataGrid& g) {
        apply_boundary_axis(g, a, boundary_[b], spec_, true, false);
        if (a == 2) zero_solid_faces(g);
      });
    }
    ghosts_valid_ = true;
  }

  void fill_pressure_ghosts() {
    static constexpr int kPres[1] = {kP};
    for (int a = 0; a < 3; ++a) {
      cluster_->execute(halo_[a], access_, std::span<const int>(kPres, 1));
      run_compute([&](int b, DataGrid& g) { apply_boundary_axis(g, a, boundary_[b], spec_, false, true); });
    }
  }

  /// Restricts compute-level fields to every coarser depth and injects them
  /// into every deeper one.
  void propagate_levels() {
    static constexpr int kPres[1] = {kP};
    static constexpr int kAll[4] = {kUx, kUy, kUz, kP};
    for (int d = depth_ - 1; d >= 0; --d) {
      cluster_->execute(restrict_cells_[d], access_, std::span<const int>(kPres, 1));
      for (int a = 0; a < 3; ++a) {
        const int f = a;
        cluster_->execute(restrict_faces_[d][a], access_, std::span<const int>(&f, 1));
      }
    }
    if (h_.depth_count() > depth_ + 1) {
      // Parents are processed before children: blocks are listed depth-major.
      cluster_->run([&](int w) {
        for (Uid u : deep_of_[w]) h_.inject_from_parent(u, true);
      });
      for (auto& ts : deep_halo_) cluster_->execute(ts, access_, std::span<const int>(kAll, 4));
    }
  }

  GridHierarchy h_;
  FluidProps props_;
  BoundarySpec spec_;
  SimConfig cfg_;
  Access access_;
  std::unique_ptr<Cluster> cluster_;
  Partition partition_;
  NbhServer nbh_;
  NbhRepository repo_snapshot_;
  std::unique_ptr<PoissonSolver> poisson_;
  int depth_ = 0;
  std::int64_t step_ = 0;
  bool have_history_ = false;
  bool ghosts_valid_ = false;
  double last_dt_ = 0;
  std::int64_t pockets_removed_ = 0;

  std::vector<std::vector<DataGrid*>> by_depth_;
  std::map<Uid, std::pair<int, int>> index_;
  std::map<Uid, int> owner_;
  std::vector<Uid> blocks_;
  std::vector<std::vector<int>> compute_of_;
  std::vector<std::vector<Uid>> deep_of_;
  std::vector<BlockBoundary> boundary_;
  std::vector<FaceFields> scratch_;
  std::array<TransferSet, 3> halo_;
  std::vector<TransferSet> restrict_cells_;
  std::vector<std::array<TransferSet, 3>> restrict_faces_;
  std::vector<TransferSet> deep_halo_;
};

}  // namespace portwin
