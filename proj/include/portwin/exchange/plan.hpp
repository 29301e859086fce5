#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <tuple>
#include <vector>

#include "portwin/exchange/nbh.hpp"

namespace portwin {

enum class ExchangePhase : std::uint8_t { BottomUp = 0, Horizontal = 1, TopDown = 2 };

enum class LinkKind : std::uint8_t {
  Face = 0,           // same-depth face neighbours: interior layer -> ghost layer
  ChildToParent = 1,  // volume-averaged restriction
  CoarseToFine = 2,   // coarse cell injected into a fine block's ghost layer
};

/// Bitmask of block fields carried by a message.
enum FieldBits : std::uint8_t {
  kFieldUx = 1,
  kFieldUy = 2,
  kFieldUz = 4,
  kFieldP = 8,
  kFieldAll = kFieldUx | kFieldUy | kFieldUz | kFieldP,
};

struct PayloadDescriptor {
  std::uint8_t fields = kFieldAll;
  std::uint64_t values_per_field = 0;
};

struct PlanMessage {
  Uid source;
  Uid target;
  LinkKind link = LinkKind::Face;
  Face face = Face::West;  // face of the target the data arrives through
  PayloadDescriptor payload;
};

struct ExchangePlan {
  ExchangePhase phase = ExchangePhase::Horizontal;
  std::vector<PlanMessage> messages;
};

/// Deterministic message list of one communication phase, sorted by
/// (source, target, face). `depth` restricts the plan to target grids of
/// one depth.
inline ExchangePlan build_exchange_plan(const NbhRepository& repo, ExchangePhase phase,
                                        const Int3& block_size, std::optional<int> depth = {}) {
  ExchangePlan plan;
  plan.phase = phase;
  auto face_values = [&](Face f) {
    const int a = face_axis(f);
    std::uint64_t v = 1;
    for (int b = 0; b < kDim; ++b) {
      if (b != a) v *= static_cast<std::uint64_t>(block_size[b]);
    }
    return v;
  };
  for (const auto& [uid, e] : repo.entries()) {
    if (depth && e.depth != *depth) continue;
    switch (phase) {
      case ExchangePhase::Horizontal:
        for (Face f : kAllFaces) {
          if (auto n = e.neighbors[face_index(f)]) {
            plan.messages.push_back({*n, uid, LinkKind::Face, f, {kFieldAll, face_values(f)}});
          }
        }
        break;
      case ExchangePhase::BottomUp:
        if (e.parent) {
          plan.messages.push_back({uid, *e.parent, LinkKind::ChildToParent, Face::West,
                                   {kFieldAll, static_cast<std::uint64_t>(product(block_size))}});
        }
        break;
      case ExchangePhase::TopDown:
        for (Face f : kAllFaces) {
          if (e.neighbors[face_index(f)]) continue;
          if (auto c = repo.query_neighbor(uid, f)) {
            plan.messages.push_back({*c, uid, LinkKind::CoarseToFine, f, {kFieldAll, face_values(f)}});
          }
        }
        break;
    }
  }
  std::sort(plan.messages.begin(), plan.messages.end(), [](const PlanMessage& a, const PlanMessage& b) {
    return std::make_tuple(a.source, a.target, face_index(a.face)) <
           std::make_tuple(b.source, b.target, face_index(b.face));
  });
  return plan;
}

}  // namespace portwin
