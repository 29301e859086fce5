#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>

#include "portwin/runtime/simulation.hpp"

namespace portwin {

/// Single-slot, newest-wins holder of the latest published snapshot.
/// Publishing never waits for readers; readers keep whatever snapshot they
/// took alive through the shared pointer.
class SnapshotBuffer {
 public:
  void publish(std::shared_ptr<const Snapshot> s) {
    std::lock_guard lock(mu_);
    latest_ = std::move(s);
    ++publications_;
  }

  std::shared_ptr<const Snapshot> latest() const {
    std::lock_guard lock(mu_);
    return latest_;
  }

  std::uint64_t publications() const {
    std::lock_guard lock(mu_);
    return publications_;
  }

 private:
  mutable std::mutex mu_;
  std::shared_ptr<const Snapshot> latest_;
  std::uint64_t publications_ = 0;
};

/// Receiver of steering commands on behalf of a running simulation.
class SteeringSink {
 public:
  virtual ~SteeringSink() = default;
  /// Blocks the caller (never the simulation) until the command took
  /// effect or was rejected.
  virtual SteeringOutcome submit(const SteeringCommand& cmd) = 0;
  virtual bool paused() const = 0;
};

struct RunnerOptions {
  int snapshot_interval = 1;  // publish every n steps
  SteeringLimits limits;
};

/// Drives a simulation step by step. Steering commands queue up and are
/// applied between steps; snapshots go to a SnapshotBuffer.
class SimulationRunner : public SteeringSink {
 public:
  SimulationRunner(Simulation& sim, SnapshotBuffer& buffer, RunnerOptions opt = {})
      : sim_(sim), buffer_(buffer), opt_(opt) {
    if (opt_.snapshot_interval < 1) throw ConfigError("snapshot interval must be >= 1");
  }

  ~SimulationRunner() override { finish(); }

  /// Runs `steps` steps on the calling thread (paused time does not count).
  void run(std::int64_t steps, const std::function<void(const StepReport&)>& on_step = {}) {
    {
      std::lock_guard lock(mu_);
      running_ = true;
      finished_ = false;
    }
    buffer_.publish(sim_.snapshot());
    std::int64_t done = 0;
    try {
      while (done < steps && !stop_.load()) {
        drain();
        {
          std::unique_lock lock(mu_);
          if (paused_) {
            cv_.wait_for(lock, std::chrono::milliseconds(50), [&] { return !queue_.empty() || stop_.load(); });
            continue;
          }
        }
        const StepReport r = sim_.step();
        ++done;
        if (on_step) on_step(r);
        if (done % opt_.snapshot_interval == 0 || done == steps) buffer_.publish(sim_.snapshot());
      }
      drain();
    } catch (...) {
      finish();
      throw;
    }
    finish();
  }

  void request_stop() {
    stop_.store(true);
    cv_.notify_all();
  }

  SteeringOutcome submit(const SteeringCommand& cmd) override {
    std::future<SteeringOutcome> fut;
    {
      std::lock_guard lock(mu_);
      if (!running_) {
        SteeringOutcome o;
        o.reason = "simulation is not running";
        return o;
      }
      queue_.push_back(Pending{cmd, {}});
      fut = queue_.back().promise.get_future();
    }
    cv_.notify_all();
    return fut.get();
  }

  bool paused() const override {
    std::lock_guard lock(mu_);
    return paused_;
  }

 private:
  struct Pending {
    SteeringCommand cmd;
    std::promise<SteeringOutcome> promise;
  };

  void drain() {
    std::deque<Pending> work;
    {
      std::lock_guard lock(mu_);
      work.swap(queue_);
    }
    bool changed = false;
    for (Pending& p : work) {
      SteeringOutcome o;
      try {
        o = sim_.apply_steering(p.cmd, opt_.limits);
      } catch (const Error& e) {
        o = SteeringOutcome{};
        o.reason = e.what();
      }
      if (o.accepted) {
        std::lock_guard lock(mu_);
        if (p.cmd.kind == SteeringKind::Pause) paused_ = true;
        if (p.cmd.kind == SteeringKind::Resume) paused_ = false;
        changed = changed || p.cmd.kind == SteeringKind::RefineRegion;
      }
      p.promise.set_value(std::move(o));
    }
    if (changed) buffer_.publish(sim_.snapshot());
  }

  void finish() {
    std::deque<Pending> left;
    {
      std::lock_guard lock(mu_);
      running_ = false;
      finished_ = true;
      left.swap(queue_);
    }
    for (Pending& p : left) {
      SteeringOutcome o;
      o.reason = "simulation is not running";
      p.promise.set_value(std::move(o));
    }
  }

  Simulation& sim_;
  SnapshotBuffer& buffer_;
  RunnerOptions opt_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Pending> queue_;
  bool running_ = false;
  bool finished_ = false;
  bool paused_ = false;
  std::atomic<bool> stop_{false};
};

}  // namespace portwin
