#pragma once

#include <array>
#include <atomic>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "portwin/core/error.hpp"
#include "portwin/core/geometry.hpp"
#include "portwin/grid/hierarchy.hpp"
#include "portwin/grid/morton.hpp"
#include "portwin/grid/uid.hpp"

namespace portwin {

struct NbhEntry {
  Uid uid;
  Box bbox;
  int depth = 0;
  std::optional<Uid> parent;
  std::vector<Uid> children;
  Int3 coords{0, 0, 0};
  int worker = 0;
  std::array<std::optional<Uid>, 6> neighbors;  // same-depth, indexed by Face
};

/// Topological and geometrical repository of every grid (no field data).
class NbhRepository {
 public:
  void register_grid(Uid uid, const Box& bbox, int depth, std::optional<Uid> parent,
                     const Int3& coords, int worker) {
    if (entries_.count(uid)) {
      throw RegistrationError("uid " + std::to_string(uid.packed) + " already registered");
    }
    NbhEntry e;
    e.uid = uid;
    e.bbox = bbox;
    e.depth = depth;
    e.parent = parent;
    e.coords = coords;
    e.worker = worker;
    for (Face f : kAllFaces) {
      Int3 c = coords;
      c[face_axis(f)] += face_is_high(f) ? 1 : -1;
      if (c[face_axis(f)] < 0) continue;
      auto it = by_position_.find({depth, morton_key(c)});
      if (it == by_position_.end()) continue;
      e.neighbors[face_index(f)] = it->second;
      entries_.at(it->second).neighbors[face_index(opposite(f))] = uid;
    }
    if (parent) {
      auto pit = entries_.find(*parent);
      if (pit != entries_.end()) pit->second.children.push_back(uid);
    }
    // Children registered before their parent are linked here.
    for (auto& [id, other] : entries_) {
      if (other.parent == uid) e.children.push_back(id);
    }
    by_position_[{depth, morton_key(coords)}] = uid;
    entries_.emplace(uid, std::move(e));
  }

  /// Registers every grid of a hierarchy with its owning worker.
  void register_hierarchy(const GridHierarchy& h, const std::map<Uid, int>& owners = {}) {
    for (const auto& [uid, g] : h.grids()) {
      auto it = owners.find(uid);
      register_grid(uid, g.bbox, g.depth, g.parent, g.block_coords,
                    it == owners.end() ? 0 : it->second);
    }
  }

  bool contains(Uid uid) const { return entries_.count(uid) != 0; }
  std::size_t size() const { return entries_.size(); }
  const std::map<Uid, NbhEntry>& entries() const { return entries_; }

  const NbhEntry& entry(Uid uid) const {
    auto it = entries_.find(uid);
    if (it == entries_.end()) throw LookupError("nbh: unknown uid " + std::to_string(uid.packed));
    return it->second;
  }

  void set_worker(Uid uid, int worker) {
    auto it = entries_.find(uid);
    if (it == entries_.end()) throw LookupError("nbh: unknown uid " + std::to_string(uid.packed));
    it->second.worker = worker;
  }

  /// Same-depth face neighbour, else the coarser grid covering that face,
  /// else none (domain boundary).
  std::optional<Uid> query_neighbor(Uid uid, Face face) const {
    const NbhEntry& e = entry(uid);
    if (auto n = e.neighbors[face_index(face)]) return n;

    // Probe point: centre of the would-be same-depth neighbour.
    const int ax = face_axis(face);
    Vec3 probe = e.bbox.center();
    probe[ax] += (face_is_high(face) ? 1.0 : -1.0) * e.bbox.extent()[ax];

    std::optional<Uid> anc = e.parent;
    while (anc) {
      const NbhEntry& a = entry(*anc);
      if (auto n = a.neighbors[face_index(face)]) {
        const NbhEntry* cur = &entry(*n);
        if (!inside(cur->bbox, probe)) return std::nullopt;
        for (;;) {
          const NbhEntry* next = nullptr;
          if (cur->depth + 1 < e.depth) {
            for (Uid c : cur->children) {
              const NbhEntry& ce = entry(c);
              if (inside(ce.bbox, probe)) {
                next = &ce;
                break;
              }
            }
          }
          if (!next) break;
          cur = next;
        }
        return cur->uid;
      }
      anc = a.parent;
    }
    return std::nullopt;
  }

  /// Grids of one depth whose boxes overlap `window`, in uid order.
  std::vector<Uid> grids_intersecting(const Box& window, int depth) const {
    std::vector<Uid> out;
    for (const auto& [uid, e] : entries_) {
      if (e.depth == depth && e.bbox.overlaps(window)) out.push_back(uid);
    }
    return out;
  }

 private:
  static bool inside(const Box& b, const Vec3& p) {
    for (int a = 0; a < kDim; ++a) {
      if (!(p[a] >= b.min[a] && p[a] <= b.max[a])) return false;
    }
    return true;
  }

  std::map<Uid, NbhEntry> entries_;
  std::map<std::pair<int, std::uint64_t>, Uid> by_position_;
};

/// The neighbourhood server: a single shared repository answering queries
/// from workers and the collector concurrently.
class NbhServer {
 public:
  void register_grid(Uid uid, const Box& bbox, int depth, std::optional<Uid> parent,
                     const Int3& coords, int worker) {
    std::unique_lock lock(mu_);
    repo_.register_grid(uid, bbox, depth, parent, coords, worker);
  }

  std::optional<Uid> query_neighbor(Uid uid, Face face) const {
    ++queries_;
    std::shared_lock lock(mu_);
    return repo_.query_neighbor(uid, face);
  }

  /// Grids covering a window at one depth, with their owning workers.
  std::vector<std::pair<Uid, int>> locate(const Box& window, int depth) const {
    ++queries_;
    std::shared_lock lock(mu_);
    std::vector<std::pair<Uid, int>> out;
    for (Uid u : repo_.grids_intersecting(window, depth)) out.emplace_back(u, repo_.entry(u).worker);
    return out;
  }

  template <typename Fn>
  void with_repository(Fn&& fn) {
    std::unique_lock lock(mu_);
    fn(repo_);
  }

  NbhRepository copy() const {
    std::shared_lock lock(mu_);
    return repo_;
  }

  std::uint64_t query_count() const { return queries_; }

 private:
  mutable std::shared_mutex mu_;
  NbhRepository repo_;
  mutable std::atomic<std::uint64_t> queries_{0};
};

}  // namespace portwin
