#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "portwin/runtime/runner.hpp"
#include "portwin/services/protocol.hpp"
#include "portwin/services/stream.hpp"
#include "portwin/services/window.hpp"

namespace portwin {

struct CollectorOptions {
  int max_sessions = 16;
  int send_timeout_ms = 10000;  // a client that stops reading is dropped after this
};

inline SteeringKind steering_kind(SteeringCode c) {
  switch (c) {
    case SteeringCode::SetInflow: return SteeringKind::SetInflow;
    case SteeringCode::SetViscosity: return SteeringKind::SetViscosity;
    case SteeringCode::RefineRegion: return SteeringKind::RefineRegion;
    case SteeringCode::Pause: return SteeringKind::Pause;
    case SteeringCode::Resume: return SteeringKind::Resume;
  }
  throw ProtocolError("unknown steering kind");
}

/// Gateway between client sessions and the simulation. It answers every
/// frame from the newest published snapshot and forwards steering to the
/// sink; without a sink (replay) steering is rejected.
class Collector {
 public:
  Collector(const SnapshotBuffer& snapshots, SteeringSink* sink, CollectorOptions opt = {})
      : snaps_(snapshots), sink_(sink), opt_(opt) {
    if (opt_.max_sessions < 1) throw ConfigError("max_sessions must be >= 1");
  }

  Collector(const Collector&) = delete;
  Collector& operator=(const Collector&) = delete;
  ~Collector() { stop(); }

  /// New session id; CapacityError when the session limit is reached.
  std::uint64_t open_session() {
    std::lock_guard lock(mu_);
    if (static_cast<int>(open_.size()) >= opt_.max_sessions) {
      throw CapacityError("session limit of " + std::to_string(opt_.max_sessions) + " reached");
    }
    const std::uint64_t id = next_session_++;
    open_[id] = true;
    return id;
  }

  void close_session(std::uint64_t id) {
    std::lock_guard lock(mu_);
    open_.erase(id);
  }

  bool session_open(std::uint64_t id) const {
    std::lock_guard lock(mu_);
    return open_.count(id) != 0;
  }

  int session_count() const {
    std::lock_guard lock(mu_);
    return static_cast<int>(open_.size());
  }

  StatusMessage status(std::uint64_t request_id, std::uint64_t session) const {
    StatusMessage m;
    m.request_id = request_id;
    m.session_id = session;
    m.live = sink_ != nullptr;
    m.paused = sink_ != nullptr && sink_->paused();
    if (auto s = snaps_.latest()) {
      m.domain = s->hierarchy.config().domain();
      m.step = s->step;
      for (int d = 0; d < s->hierarchy.depth_count(); ++d) {
        if (!s->hierarchy.at_depth(d).empty()) m.depths.push_back(d);
      }
    }
    return m;
  }

  static ByteBuffer error_frame(std::uint64_t request_id, const std::string& msg, AckStatus st = AckStatus::ProtocolError) {
    AckMessage a;
    a.request_id = request_id;
    a.status = st;
    a.message = msg;
    return encode(a);
  }

  /// Exactly one reply frame for one incoming frame of a session.
  ByteBuffer handle(std::uint64_t session, const Frame& f) {
    const std::uint64_t rid = peek_request_id(f.payload);
    try {
      switch (f.type) {
        case FrameType::WindowRequest: {
          const WindowRequest req = decode_window_request(f.payload);
          check_session(session, req.client_id);
          auto snap = snaps_.latest();
          if (!snap) return error_frame(req.request_id, "no snapshot available yet", AckStatus::Empty);
          ++windows_served_;
          return encode(handle_window_request(req, *snap));
        }
        case FrameType::Steering: {
          const SteeringMessage m = decode_steering(f.payload);
          check_session(session, m.client_id);
          AckMessage a;
          a.request_id = m.request_id;
          if (!sink_) {
            a.status = AckStatus::Rejected;
            a.message = "steering is unavailable while replaying a stored snapshot";
            return encode(a);
          }
          SteeringCommand cmd;
          cmd.kind = steering_kind(m.kind);
          cmd.vector = m.vector;
          cmd.scalar = m.scalar;
          cmd.box = m.box;
          const SteeringOutcome o = sink_->submit(cmd);
          a.status = o.accepted ? AckStatus::Accepted : AckStatus::Rejected;
          a.effective_step = o.effective_step;
          a.message = o.reason;
          return encode(a);
        }
        case FrameType::Status: {
          ByteReader r(f.payload);
          const std::uint64_t id = r.u64();
          r.expect_end();
          return encode(status(id, session));
        }
        default:
          return error_frame(rid, "frame type " + std::to_string(static_cast<int>(f.type)) +
                                      " is not accepted by the collector");
      }
    } catch (const ProtocolError& e) {
      return error_frame(rid, e.what());
    } catch (const Error& e) {
      return error_frame(rid, std::string(e.kind()) + ": " + e.what());
    }
  }

  /// Serves one connection until the peer closes or misbehaves.
  void serve(FrameStream& stream) {
    std::uint64_t session = 0;
    try {
      session = open_session();
    } catch (const CapacityError& e) {
      try {
        stream.write(error_frame(0, e.what()));
      } catch (const Error&) {
      }
      return;
    }
    try {
      stream.write(encode(status(0, session)));
      while (!stopping_.load()) {
        std::optional<Frame> f;
        try {
          f = stream.read(200);
        } catch (const ProtocolError& e) {
          stream.write(error_frame(0, e.what()));
          break;
        }
        if (!f) {
          if (stream.closed()) break;
          continue;
        }
        stream.write(handle(session, *f));
      }
    } catch (const Error&) {
      // peer vanished or stopped reading
    }
    close_session(session);
  }

  /// Starts accepting raw TCP sessions; returns the bound endpoint.
  Endpoint listen_tcp(const Endpoint& at) { return start_listener(at, false); }
  /// Starts accepting WebSocket sessions; returns the bound endpoint.
  Endpoint listen_ws(const Endpoint& at) { return start_listener(at, true); }

  void stop() {
    stopping_.store(true);
    std::vector<std::thread> threads;
    {
      std::lock_guard lock(mu_);
      for (auto& c : conns_) {
        if (c->stream) c->stream->shutdown();
      }
      threads.swap(acceptors_);
    }
    for (auto& t : threads) t.join();
    std::list<std::shared_ptr<Conn>> conns;
    {
      std::lock_guard lock(mu_);
      conns.swap(conns_);
    }
    for (auto& c : conns) {
      if (c->thread.joinable()) c->thread.join();
    }
  }

  std::uint64_t windows_served() const { return windows_served_.load(); }

 private:
  struct Conn {
    std::unique_ptr<FrameStream> stream;
    std::thread thread;
    std::atomic<bool> done{false};
  };

  // A request must name the session of the connection it arrives on.
  void check_session(std::uint64_t session, std::uint64_t id) const {
    if (id != session || !session_open(id)) throw ProtocolError("unknown session id " + std::to_string(id));
  }

  Endpoint start_listener(const Endpoint& at, bool websocket) {
    auto listener = std::make_shared<Listener>(at);
    const Endpoint bound = listener->endpoint();
    std::lock_guard lock(mu_);
    acceptors_.emplace_back([this, listener, websocket] { accept_loop(*listener, websocket); });
    return bound;
  }

  void accept_loop(const Listener& l, bool websocket) {
    while (!stopping_.load()) {
      auto s = l.accept(100);
      reap();
      if (!s) continue;
      s->set_send_timeout(opt_.send_timeout_ms);
      auto conn = std::make_shared<Conn>();
      auto sock = std::make_shared<Socket>(std::move(*s));
      std::lock_guard guard(mu_);
      if (stopping_.load()) return;
      conns_.push_back(conn);
      conn->thread = std::thread([this, conn, sock, websocket] {
        try {
          if (websocket) {
            auto ws = accept_websocket(std::move(*sock));
            {
              std::lock_guard lock(mu_);
              conn->stream = std::move(ws);
            }
          } else {
            std::lock_guard lock(mu_);
            conn->stream = std::make_unique<TcpFrameStream>(std::move(*sock));
          }
          if (!stopping_.load()) serve(*conn->stream);
        } catch (const Error&) {
        }
        conn->done.store(true);
      });
    }
  }

  // Joins finished connection threads.
  void reap() {
    std::vector<std::shared_ptr<Conn>> finished;
    {
      std::lock_guard lock(mu_);
      for (auto it = conns_.begin(); it != conns_.end();) {
        if ((*it)->done.load()) {
          finished.push_back(*it);
          it = conns_.erase(it);
        } else {
          ++it;
        }
      }
    }
    for (auto& c : finished) {
      if (c->thread.joinable()) c->thread.join();
    }
  }

  const SnapshotBuffer& snaps_;
  SteeringSink* sink_;
  CollectorOptions opt_;
  mutable std::mutex mu_;
  std::map<std::uint64_t, bool> open_;
  std::uint64_t next_session_ = 1;
  std::atomic<bool> stopping_{false};
  std::vector<std::thread> acceptors_;
  std::list<std::shared_ptr<Conn>> conns_;
  std::atomic<std::uint64_t> windows_served_{0};
};

}  // namespace portwin
