#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <tuple>
#include <vector>

#include "portwin/exchange/compile.hpp"
#include "portwin/exchange/nbh.hpp"
#include "portwin/exchange/partition.hpp"
#include "portwin/exchange/plan.hpp"
#include "portwin/exchange/transfer.hpp"
#include "portwin/exchange/transport.hpp"
#include "portwin/grid/hierarchy.hpp"
#include "support/oracles.hpp"

using namespace portwin;
using namespace portwin::testing_support;

namespace {

// Field store over the blocks of one or more levels.
class Store : public FieldAccess {
 public:
  Store(const std::vector<std::vector<Uid>>& levels, const Int3& n) : levels_(levels) {
    for (std::size_t l = 0; l < levels.size(); ++l) {
      fields_.emplace_back();
      for (std::size_t b = 0; b < levels[l].size(); ++b) {
        locate_[levels[l][b]] = {static_cast<int>(l), static_cast<int>(b)};
        fields_[l].push_back({ScalarField(n), ScalarField(n)});
      }
    }
  }
  ScalarField& field(int level, int block, int f) override { return fields_[level][block][f]; }
  ScalarField& of(Uid u, int f = 0) {
    auto [l, b] = locate_.at(u);
    return fields_[l][b][f];
  }
  BlockLocator locator() const {
    return [this](Uid u) { return locate_.at(u); };
  }
  Ownership ownership(const Partition& p) const {
    Ownership o;
    for (const auto& lvl : levels_) {
      o.emplace_back();
      for (Uid u : lvl) o.back().push_back(p.worker_of(u));
    }
    return o;
  }

 private:
  std::vector<std::vector<Uid>> levels_;
  std::map<Uid, std::pair<int, int>> locate_;
  std::vector<std::vector<std::array<ScalarField, 2>>> fields_;
};

// Drops every message on one ordered worker pair.
class DroppingTransport final : public Transport {
 public:
  DroppingTransport(int n, int from, int to) : inner_(n), from_(from), to_(to) {}
  int endpoints() const override { return inner_.endpoints(); }
  void send(int from, int to, Bytes msg) override {
    if (from == from_ && to == to_) return;
    inner_.send(from, to, std::move(msg));
  }
  std::optional<Bytes> receive(int at, int from, std::chrono::milliseconds t) override {
    return inner_.receive(at, from, t);
  }

 private:
  LocalTransport inner_;
  int from_, to_;
};

// Global-index value pattern: distinct for every interior cell of a level.
double pattern(const Int3& g) { return 1e6 * g[0] + 1e3 * g[1] + g[2] + 0.25; }

}  // namespace

TEST(Partition, BalancedSplitExamples) {
  GridHierarchy eight = GridHierarchy::build(unit_config({2, 2, 2}), 1, false);
  Partition p = partition_morton(eight, 4);
  for (const auto& w : p.blocks) EXPECT_EQ(w.size(), 2u);

  GridHierarchy ten = GridHierarchy::build(unit_config({10, 1, 1}), 1, false);
  p = partition_morton(ten, 4);
  std::vector<std::size_t> sizes;
  for (const auto& w : p.blocks) sizes.push_back(w.size());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 2, 2}));

  EXPECT_THROW(partition_morton(ten, 11), PartitionError);
  EXPECT_THROW(partition_morton(ten, 0), PartitionError);
  EXPECT_EQ(partition_morton(ten, 10).blocks.back().size(), 1u);
}

TEST(Partition, RandomHierarchiesGiveBalancedContiguousChunks) {
  std::mt19937_64 rng(0x5eed);
  for (int trial = 0; trial < 1000; ++trial) {
    const GridHierarchy h = random_hierarchy(rng, 5, 4000);
    const std::vector<Uid> leaves = h.leaves();
    const int workers = 1 + static_cast<int>(rng() % std::min<std::size_t>(leaves.size(), 16));
    const Partition p = partition_morton(h, workers);

    ASSERT_EQ(check_partition(h, p, workers), "") << "trial " << trial;
  }
}

TEST(Partition, MortonChunksHaveLessSurfaceThanRandomAssignment) {
  const GridHierarchy h = GridHierarchy::build(unit_config({4, 4, 4}), 1, false);
  NbhRepository repo;
  repo.register_hierarchy(h);
  auto cut_faces = [&](const std::map<Uid, int>& owner) {
    int cut = 0;
    for (const auto& [uid, e] : repo.entries()) {
      for (const auto& n : e.neighbors) {
        if (n && owner.at(*n) != owner.at(uid)) ++cut;
      }
    }
    return cut;
  };
  const Partition p = partition_morton(h, 8);
  for (const auto& w : p.blocks) {
    ASSERT_EQ(w.size(), 8u);
    std::vector<std::uint64_t> k;
    for (Uid u : w) k.push_back(oracle_morton(h.grid(u).block_coords));
    EXPECT_EQ(k.back() - k.front(), 7u);
  }
  const int morton_cut = cut_faces(p.assignment);

  std::mt19937_64 rng(3);
  double random_cut = 0;
  const int trials = 50;
  for (int t = 0; t < trials; ++t) {
    std::vector<Uid> ids = h.leaves();
    std::shuffle(ids.begin(), ids.end(), rng);
    std::map<Uid, int> owner;
    for (std::size_t i = 0; i < ids.size(); ++i) owner[ids[i]] = static_cast<int>(i / 8);
    random_cut += cut_faces(owner);
  }
  random_cut /= trials;
  EXPECT_LT(morton_cut, random_cut);
  // 8 cubes of 2x2x2 blocks: 3 internal planes of 16 faces, counted from both sides.
  EXPECT_EQ(morton_cut, 96);
}

TEST(Nbh, RegistrationExamples) {
  NbhRepository repo;
  const Uid a = uid_encode(0, 1), b = uid_encode(0, 2);
  repo.register_grid(a, Box{{0, 0, 0}, {1, 1, 1}}, 0, {}, {0, 0, 0}, 0);
  for (Face f : kAllFaces) EXPECT_FALSE(repo.query_neighbor(a, f));
  repo.register_grid(b, Box{{1, 0, 0}, {2, 1, 1}}, 0, {}, {1, 0, 0}, 1);
  EXPECT_EQ(repo.query_neighbor(a, Face::East), b);
  EXPECT_EQ(repo.query_neighbor(b, Face::West), a);
  EXPECT_FALSE(repo.query_neighbor(a, Face::West));
  EXPECT_FALSE(repo.query_neighbor(b, Face::North));
  EXPECT_THROW(repo.register_grid(a, Box{{0, 0, 0}, {1, 1, 1}}, 0, {}, {0, 0, 0}, 0), RegistrationError);
  EXPECT_THROW(repo.query_neighbor(uid_encode(0, 99), Face::East), LookupError);
  EXPECT_EQ(repo.entry(b).worker, 1);
}

TEST(Nbh, FineBlockAbuttingCoarseBlockSeesCoarseBlock) {
  GridHierarchy h = GridHierarchy::build(unit_config({2, 1, 1}), 1, false);
  const Uid west = h.at_depth(1)[0], east = h.at_depth(1)[1];
  h.refine(west);
  NbhRepository repo;
  repo.register_hierarchy(h);
  for (Uid c : h.grid(west).children) {
    const auto& g = h.grid(c);
    const auto n = repo.query_neighbor(c, Face::East);
    if (g.block_coords[0] == 1) {
      EXPECT_EQ(n, east);
    } else {
      ASSERT_TRUE(n);
      EXPECT_EQ(repo.entry(*n).depth, 2);
    }
    if (g.block_coords[0] == 0) {
      EXPECT_FALSE(repo.query_neighbor(c, Face::West));
    } else {
      EXPECT_EQ(repo.entry(*repo.query_neighbor(c, Face::West)).depth, 2);
    }
  }
}

TEST(Nbh, NeighbourTablesMatchAllPairsOracle) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const GridHierarchy h = random_hierarchy(rng, 7, 512);
    ASSERT_LE(h.grids().size(), 512u);

    // Register in a random order: the incremental linkage must not depend on it.
    std::vector<Uid> order;
    for (const auto& [uid, g] : h.grids()) order.push_back(uid);
    std::shuffle(order.begin(), order.end(), rng);
    NbhRepository repo;
    for (Uid u : order) {
      const auto& g = h.grid(u);
      repo.register_grid(u, g.bbox, g.depth, g.parent, g.block_coords, 0);
    }
    ASSERT_EQ(check_nbh(h, repo), "") << "trial " << trial;
  }
}

TEST(Plan, MessageCountExamples) {
  GridHierarchy one = GridHierarchy::build(unit_config({1, 1, 1}), 0, false);
  NbhRepository r1;
  r1.register_hierarchy(one);
  EXPECT_TRUE(build_exchange_plan(r1, ExchangePhase::Horizontal, {4, 4, 4}).messages.empty());

  GridHierarchy two = GridHierarchy::build(unit_config({2, 1, 1}, {2, 2, 2}, 3, {4, 4, 4}), 1, false);
  NbhRepository r2;
  r2.register_hierarchy(two);
  const ExchangePlan hp = build_exchange_plan(r2, ExchangePhase::Horizontal, {4, 4, 4});
  ASSERT_EQ(hp.messages.size(), 2u);
  EXPECT_EQ(hp.messages[0].payload.values_per_field, 16u);
  EXPECT_NE(hp.messages[0].face, hp.messages[1].face);

  GridHierarchy fam = GridHierarchy::build(unit_config({2, 2, 2}), 1, false);
  NbhRepository r3;
  r3.register_hierarchy(fam);
  const ExchangePlan bu = build_exchange_plan(r3, ExchangePhase::BottomUp, {4, 4, 4});
  EXPECT_EQ(bu.messages.size(), 8u);
  for (const auto& m : bu.messages) EXPECT_EQ(m.link, LinkKind::ChildToParent);
  // 8 children in a 2x2x2 cube share 12 faces, two messages each.
  EXPECT_EQ(build_exchange_plan(r3, ExchangePhase::Horizontal, {4, 4, 4}, 1).messages.size(), 24u);
}

TEST(Plan, IsDeterministicInRegistrationOrder) {
  std::mt19937_64 rng(11);
  auto flat = [](const ExchangePlan& p) {
    std::vector<std::tuple<Uid, Uid, int, int>> v;
    for (const auto& m : p.messages) v.emplace_back(m.source, m.target, int(m.link), face_index(m.face));
    return v;
  };
  for (int trial = 0; trial < 20; ++trial) {
    const GridHierarchy h = random_hierarchy(rng, 4, 300);
    std::vector<Uid> order;
    for (const auto& [uid, g] : h.grids()) order.push_back(uid);
    NbhRepository a, b;
    a.register_hierarchy(h);
    std::shuffle(order.begin(), order.end(), rng);
    for (Uid u : order) {
      const auto& g = h.grid(u);
      b.register_grid(u, g.bbox, g.depth, g.parent, g.block_coords, 0);
    }
    for (auto phase : {ExchangePhase::BottomUp, ExchangePhase::Horizontal, ExchangePhase::TopDown}) {
      const auto pa = flat(build_exchange_plan(a, phase, {4, 4, 4}));
      ASSERT_EQ(pa, flat(build_exchange_plan(b, phase, {4, 4, 4})));
      ASSERT_TRUE(std::is_sorted(pa.begin(), pa.end()));
    }
  }
}

namespace {

struct HaloCase {
  GridHierarchy h;
  NbhRepository repo;
  Int3 n{6, 4, 6};
};

HaloCase halo_case() {
  HaloCase c;
  c.h = GridHierarchy::build(unit_config({3, 2, 2}, {2, 2, 2}, 1, c.n), 1, false);
  c.repo.register_hierarchy(c.h);
  return c;
}

void fill_pattern(Store& s, const GridHierarchy& h, const std::vector<Uid>& uids, const Int3& n) {
  for (Uid u : uids) {
    const Int3 bc = h.grid(u).block_coords;
    ScalarField& f = s.of(u, 0);
    ScalarField& g = s.of(u, 1);
    f.fill(-1);
    g.fill(-1);
    for (int k = 0; k < n[2]; ++k)
      for (int j = 0; j < n[1]; ++j)
        for (int i = 0; i < n[0]; ++i) {
          const Int3 gi{bc[0] * n[0] + i, bc[1] * n[1] + j, bc[2] * n[2] + k};
          f(i, j, k) = pattern(gi);
          g(i, j, k) = -pattern(gi);
        }
  }
}

// Every face ghost with a same-depth neighbour holds the neighbour's value
// at the same global index; other ghosts are untouched.
void check_halo(Store& s, const GridHierarchy& h, const NbhRepository& repo, const Int3& n) {
  for (Uid u : h.at_depth(1)) {
    const Int3 bc = h.grid(u).block_coords;
    for (Face f : kAllFaces) {
      const int a = face_axis(f);
      const bool has = repo.entry(u).neighbors[face_index(f)].has_value();
      Int3 lo{0, 0, 0}, hi = n;
      lo[a] = face_is_high(f) ? n[a] : -1;
      hi[a] = lo[a] + 1;
      for (int k = lo[2]; k < hi[2]; ++k)
        for (int j = lo[1]; j < hi[1]; ++j)
          for (int i = lo[0]; i < hi[0]; ++i) {
            const Int3 gi{bc[0] * n[0] + i, bc[1] * n[1] + j, bc[2] * n[2] + k};
            ASSERT_EQ(s.of(u, 0)(i, j, k), has ? pattern(gi) : -1.0);
            ASSERT_EQ(s.of(u, 1)(i, j, k), has ? -pattern(gi) : -1.0);
          }
    }
  }
}

}  // namespace

TEST(GhostExchange, FillsFaceGhostsForAnyWorkerCountAndTransport) {
  HaloCase c = halo_case();
  const ExchangePlan plan = build_exchange_plan(c.repo, ExchangePhase::Horizontal, c.n);
  for (int workers : {1, 2, 4, 12}) {
    for (bool sockets : {false, true}) {
      Store s({c.h.at_depth(1)}, c.n);
      fill_pattern(s, c.h, c.h.at_depth(1), c.n);
      const Partition p = partition_morton(c.h, workers);
      std::unique_ptr<Transport> t;
      if (sockets) t = std::make_unique<SocketTransport>(workers);
      Cluster cluster(workers, std::move(t));
      const TransferSet ts(compile_face_transfers(plan, s.locator(), c.n, false), s.ownership(p), workers);
      const int fields[] = {0, 1};
      cluster.execute(ts, s, fields);
      check_halo(s, c.h, c.repo, c.n);
      // Idempotent.
      cluster.execute(ts, s, fields);
      check_halo(s, c.h, c.repo, c.n);
      if (workers == 1) {
        EXPECT_EQ(cluster.messages_sent(), 0u);
      } else {
        EXPECT_GT(cluster.messages_sent(), 0u);
      }
    }
  }
}

TEST(GhostExchange, CoarseFineGhostsTakeCoveringCoarseCell) {
  const Int3 n{4, 4, 4};
  GridHierarchy h = GridHierarchy::build(unit_config({2, 1, 1}, {2, 2, 2}, 2, n), 1, false);
  const Uid west = h.at_depth(1)[0], east = h.at_depth(1)[1];
  h.refine(west);
  NbhRepository repo;
  repo.register_hierarchy(h);
  const ExchangePlan plan = build_exchange_plan(repo, ExchangePhase::TopDown, n, 2);
  Store s({h.at_depth(1), h.at_depth(2)}, n);
  for (int k = 0; k < n[2]; ++k)
    for (int j = 0; j < n[1]; ++j)
      for (int i = 0; i < n[0]; ++i) s.of(east)(i, j, k) = pattern({i, j, k});
  const auto bbox = [&](Uid u) { return h.grid(u).bbox; };
  const auto transfers = compile_coarse_fine_transfers(plan, s.locator(), bbox, n);
  EXPECT_EQ(transfers.size(), 4u);  // the four children on the east side
  const Partition p = partition_blocks(h, [&] {
    auto v = h.at_depth(1);
    for (Uid u : h.at_depth(2)) v.push_back(u);
    return v;
  }(), 3);
  Cluster cluster(3);
  const int fields[] = {0};
  cluster.execute(TransferSet(transfers, s.ownership(p), 3), s, fields);
  for (Uid c : h.grid(west).children) {
    const Int3 bc = h.grid(c).block_coords;
    if (bc[0] != 1) continue;
    for (int k = 0; k < n[2]; ++k)
      for (int j = 0; j < n[1]; ++j) {
        // Fine rows j of child y-offset bc[1] lie in coarse row (bc[1]*n + j) / 2.
        const double want = pattern({0, (bc[1] * n[1] + j) / 2, (bc[2] * n[2] + k) / 2});
        EXPECT_EQ(s.of(c)(n[0], j, k), want);
      }
  }
}

TEST(GhostExchange, MissingMessageRaisesFaultNamingThePair) {
  HaloCase c = halo_case();
  const ExchangePlan plan = build_exchange_plan(c.repo, ExchangePhase::Horizontal, c.n);
  Store s({c.h.at_depth(1)}, c.n);
  const Partition p = partition_morton(c.h, 2);
  Cluster cluster(2, std::make_unique<DroppingTransport>(2, 0, 1), std::chrono::milliseconds(200));
  const auto transfers = compile_face_transfers(plan, s.locator(), c.n, false);
  const TransferSet ts(transfers, s.ownership(p), 2);
  const int fields[] = {0};
  try {
    cluster.execute(ts, s, fields);
    FAIL() << "expected an exchange fault";
  } catch (const ExchangeFault& e) {
    EXPECT_EQ(e.kind(), "exchange");
    EXPECT_EQ(p.worker_of(Uid{e.source()}), 0);
    EXPECT_EQ(p.worker_of(Uid{e.target()}), 1);
    const bool planned = std::any_of(transfers.begin(), transfers.end(), [&](const Transfer& t) {
      return t.src_uid.packed == e.source() && t.dst_uid.packed == e.target();
    });
    EXPECT_TRUE(planned);
  }
}

TEST(Transport, PerPairDeliveryIsOrdered) {
  for (bool sockets : {false, true}) {
    std::unique_ptr<Transport> t;
    if (sockets) {
      t = std::make_unique<SocketTransport>(3);
    } else {
      t = std::make_unique<LocalTransport>(3);
    }
    for (std::uint8_t i = 0; i < 100; ++i) {
      t->send(0, 2, Bytes{i});
      t->send(1, 2, Bytes{static_cast<std::uint8_t>(200 - i), i});
    }
    t->send(0, 1, Bytes(1 << 20, 7));
    for (std::uint8_t i = 0; i < 100; ++i) {
      ASSERT_EQ(t->receive(2, 1, std::chrono::seconds(5)), (Bytes{static_cast<std::uint8_t>(200 - i), i}));
      ASSERT_EQ(t->receive(2, 0, std::chrono::seconds(5)), Bytes{i});
    }
    const auto big = t->receive(1, 0, std::chrono::seconds(5));
    ASSERT_TRUE(big);
    EXPECT_EQ(big->size(), 1u << 20);
    EXPECT_FALSE(t->receive(2, 0, std::chrono::milliseconds(20)));
  }
}
