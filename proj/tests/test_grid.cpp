#include <gtest/gtest.h>

#include <random>
#include <set>

#include "portwin/grid/hierarchy.hpp"
#include "portwin/grid/morton.hpp"
#include "portwin/grid/uid.hpp"

using namespace portwin;

namespace {

GridConfig reference_config() {
  GridConfig c;
  c.domain_min = {0, 0, 0};
  c.domain_max = {0.32, 0.16, 0.16};
  c.root_refine = {4, 2, 2};
  c.sub_refine = {2, 2, 2};
  c.block_size = {20, 20, 20};
  c.max_depth = 3;
  return c;
}

GridConfig unit_config(Int3 s, Int3 rt = {2, 2, 2}, Int3 rs = {2, 2, 2}, int max_depth = 3) {
  GridConfig c;
  c.domain_min = {0, 0, 0};
  c.domain_max = {1, 1, 1};
  c.root_refine = rt;
  c.sub_refine = rs;
  c.block_size = s;
  c.max_depth = max_depth;
  return c;
}

// Bit-by-bit interleaver, independent of the magic-number implementation.
std::uint64_t brute_morton(Int3 c) {
  std::uint64_t key = 0;
  for (int bit = 0; bit < 21; ++bit) {
    for (int a = 0; a < 3; ++a) {
      if ((c[a] >> bit) & 1) key |= std::uint64_t{1} << (3 * bit + a);
    }
  }
  return key;
}

std::int64_t brute_window_count(const GridHierarchy& h, const Box& w, int depth) {
  std::int64_t n = 0;
  const Int3 s = h.config().block_size;
  for (Uid uid : h.at_depth(depth)) {
    const LogicalGrid& g = h.grid(uid);
    for (int k = 0; k < s[2]; ++k)
      for (int j = 0; j < s[1]; ++j)
        for (int i = 0; i < s[0]; ++i)
          if (w.contains(h.cell_center(g, i, j, k))) ++n;
  }
  return n;
}

}  // namespace

TEST(Uid, EncodeExamples) {
  EXPECT_EQ(uid_encode(3, 5).packed, 0x0000000300000005ULL);
  EXPECT_EQ(uid_encode(0, 0).packed, 0ULL);
  auto [rank, local] = uid_decode(Uid{0x0000000100000002ULL});
  EXPECT_EQ(rank, 1u);
  EXPECT_EQ(local, 2u);
}

TEST(Uid, RejectsOutOfRange) {
  EXPECT_THROW(uid_encode(-1, 0), EncodingError);
  EXPECT_THROW(uid_encode(0, std::int64_t{1} << 32), EncodingError);
  EXPECT_THROW(uid_encode(std::int64_t{1} << 32, 0), EncodingError);
}

TEST(Uid, RoundTripRandomPairs) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::int64_t> dist(0, kMaxUidPart);
  for (int n = 0; n < 10000; ++n) {
    const std::int64_t r = dist(rng), l = dist(rng);
    const Uid u = uid_encode(r, l);
    EXPECT_EQ(u.packed, static_cast<std::uint64_t>(r) * (std::uint64_t{1} << 32) +
                            static_cast<std::uint64_t>(l));
    auto [dr, dl] = uid_decode(u);
    ASSERT_EQ(dr, r);
    ASSERT_EQ(dl, l);
  }
}

TEST(Morton, Examples) {
  EXPECT_EQ(morton_key({0, 0, 0}), 0u);
  EXPECT_EQ(morton_key({1, 1, 1}), 7u);
  EXPECT_EQ(brute_morton({3, 5, 1}), 143u);
  EXPECT_EQ(morton_key({3, 5, 1}), 143u);
}

TEST(Morton, MatchesBruteForceOnRandomCoords) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> d(0, (1 << 21) - 1);
  for (int n = 0; n < 5000; ++n) {
    Int3 c{d(rng), d(rng), d(rng)};
    ASSERT_EQ(morton_key(c), brute_morton(c));
  }
}

TEST(Morton, BijectiveOnSmallCubes) {
  for (int bits = 0; bits <= 4; ++bits) {
    const int side = 1 << bits;
    std::set<std::uint64_t> keys;
    for (int z = 0; z < side; ++z)
      for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) keys.insert(morton_key({x, y, z}));
    const std::uint64_t n = std::uint64_t(side) * side * side;
    EXPECT_EQ(keys.size(), n);
    EXPECT_EQ(*keys.rbegin(), n - 1);  // dense onto [0, n)
  }
}

TEST(Morton, RejectsOverflow) {
  EXPECT_THROW(morton_key({1 << 21, 0, 0}), EncodingError);
  EXPECT_THROW(morton_key({0, -1, 0}), EncodingError);
}

TEST(GridConfig, RejectsDivisibilityViolation) {
  GridConfig c = unit_config({10, 10, 10}, {4, 2, 2});
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(GridHierarchy::build(c, 1), ConfigError);
  GridConfig bad_dom = unit_config({8, 8, 8});
  bad_dom.domain_max = {1, 0, 1};
  EXPECT_THROW(bad_dom.validate(), ConfigError);
}

TEST(GridHierarchy, ReferenceResolution) {
  const GridConfig c = reference_config();
  EXPECT_EQ(c.resolution_at(3), (Int3{320, 160, 160}));
  const GridHierarchy h = GridHierarchy::build(c, 3);
  std::int64_t cells = 0;
  for (Uid u : h.at_depth(3)) cells += product(h.block(u).cells());
  EXPECT_EQ(cells, 320LL * 160 * 160);
  for (int d = 1; d <= 3; ++d) {
    std::int64_t n = 0;
    for (Uid u : h.at_depth(d)) n += product(h.block(u).cells());
    EXPECT_EQ(n, product(c.resolution_at(d)));
  }
}

TEST(GridHierarchy, DepthZeroAndOne) {
  const GridConfig c = reference_config();
  const GridHierarchy h0 = GridHierarchy::build(c, 0);
  EXPECT_EQ(h0.grids().size(), 1u);
  EXPECT_EQ(h0.data().size(), 1u);
  EXPECT_EQ(h0.block(h0.at_depth(0)[0]).cells(), (Int3{20, 20, 20}));
  EXPECT_FALSE(h0.grid(h0.at_depth(0)[0]).parent.has_value());

  const GridHierarchy h1 = GridHierarchy::build(c, 1);
  EXPECT_EQ(h1.at_depth(1).size(), 16u);
  EXPECT_EQ(h1.grids().size(), 17u);
  EXPECT_EQ(h1.data().size(), 17u);
}

TEST(GridHierarchy, CapacityErrorOnHugeUniformDepth) {
  GridConfig c = unit_config({2, 2, 2}, {2, 2, 2}, {2, 2, 2}, 20);
  EXPECT_THROW(GridHierarchy::build(c, 12), CapacityError);
}

TEST(GridHierarchy, UniformDepthAboveMaxRejected) {
  GridConfig c = unit_config({4, 4, 4}, {2, 2, 2}, {2, 2, 2}, 1);
  EXPECT_THROW(GridHierarchy::build(c, 2), ConfigError);
}

TEST(GridHierarchy, RefineTilesParent) {
  GridHierarchy h = GridHierarchy::build(unit_config({4, 4, 4}), 1);
  const Uid leaf = h.at_depth(1)[3];
  const auto kids = h.refine(leaf);
  ASSERT_EQ(kids.size(), 8u);
  const Box pb = h.grid(leaf).bbox;
  double vol = 0;
  for (std::size_t a = 0; a < kids.size(); ++a) {
    const LogicalGrid& g = h.grid(kids[a]);
    EXPECT_EQ(g.depth, 2);
    EXPECT_EQ(g.parent, leaf);
    vol += g.bbox.volume();
    for (int ax = 0; ax < 3; ++ax) {
      EXPECT_GE(g.bbox.min[ax], pb.min[ax]);
      EXPECT_LE(g.bbox.max[ax], pb.max[ax]);
    }
    for (std::size_t b = a + 1; b < kids.size(); ++b) {
      EXPECT_FALSE(g.bbox.overlaps(h.grid(kids[b]).bbox));
    }
  }
  EXPECT_NEAR(vol, pb.volume(), 1e-15);
  EXPECT_THROW(h.refine(leaf), RefinementError);
  EXPECT_THROW(h.refine(Uid{999999}), LookupError);
}

TEST(GridHierarchy, RefineAtMaxDepthRejected) {
  GridHierarchy h = GridHierarchy::build(unit_config({4, 4, 4}, {2, 2, 2}, {2, 2, 2}, 1), 1);
  EXPECT_THROW(h.refine(h.at_depth(1)[0]), RefinementError);
}

TEST(GridHierarchy, RefineInjectsParentValues) {
  GridHierarchy h = GridHierarchy::build(unit_config({4, 4, 4}), 1);
  const Uid leaf = h.at_depth(1)[0];
  DataGrid& pd = h.block(leaf);
  for (int k = 0; k < 4; ++k)
    for (int j = 0; j < 4; ++j)
      for (int i = 0; i < 4; ++i) {
        pd.p(i, j, k) = 100 * i + 10 * j + k;
        pd.flag(i, j, k) = ((i + j + k) % 2) ? CellFlag::Solid : CellFlag::Fluid;
      }
  const auto kids = h.refine(leaf);
  const Box pb = h.grid(leaf).bbox;
  for (Uid kid : kids) {
    const LogicalGrid& g = h.grid(kid);
    const DataGrid& cd = h.block(kid);
    for (int k = 0; k < 4; ++k)
      for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i) {
          const Vec3 c = h.cell_center(g, i, j, k);
          const int pi = static_cast<int>((c[0] - pb.min[0]) / (pb.extent()[0] / 4));
          const int pj = static_cast<int>((c[1] - pb.min[1]) / (pb.extent()[1] / 4));
          const int pk = static_cast<int>((c[2] - pb.min[2]) / (pb.extent()[2] / 4));
          EXPECT_EQ(cd.p(i, j, k), pd.p(pi, pj, pk));
          EXPECT_EQ(cd.flag(i, j, k), pd.flag(pi, pj, pk));
        }
  }
}

TEST(GridHierarchy, CellCenter) {
  GridConfig c = unit_config({2, 2, 2});
  const GridHierarchy h = GridHierarchy::build(c, 0);
  const LogicalGrid& g = h.grid(h.at_depth(0)[0]);
  EXPECT_EQ(h.cell_center(g, 0, 0, 0), (Vec3{0.25, 0.25, 0.25}));
  EXPECT_EQ(h.cell_center(g, 1, 1, 1), (Vec3{0.75, 0.75, 0.75}));
  EXPECT_THROW(h.cell_center(g, 2, 0, 0), RangeError);

  GridConfig shifted = c;
  shifted.domain_min = {2, -1, 0.5};
  shifted.domain_max = {3, 0, 1.5};
  const GridHierarchy hs = GridHierarchy::build(shifted, 0);
  const Vec3 cc = hs.cell_center(hs.grid(hs.at_depth(0)[0]), 1, 0, 1);
  EXPECT_DOUBLE_EQ(cc[0], 2.75);
  EXPECT_DOUBLE_EQ(cc[1], -0.75);
  EXPECT_DOUBLE_EQ(cc[2], 1.25);
}

TEST(CellsInWindow, WholeDomainAndDisjoint) {
  const GridHierarchy h = GridHierarchy::build(reference_config(), 1);
  const Box dom = h.config().domain();
  EXPECT_EQ(h.cells_in_window(dom, 1).count, 80LL * 40 * 40);
  const WindowCells none = h.cells_in_window(Box{{1, 1, 1}, {2, 2, 2}}, 1);
  EXPECT_EQ(none.count, 0);
  EXPECT_TRUE(none.ranges.empty());
}

TEST(CellsInWindow, MatchesExhaustiveScan) {
  // Two-level hierarchy with one extra refined block: 32^3 cells at depth 2
  // plus a partial depth 3.
  GridHierarchy h = GridHierarchy::build(unit_config({8, 8, 8}), 2);
  h.refine(h.at_depth(2)[5]);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(-0.2, 1.2);
  for (int trial = 0; trial < 200; ++trial) {
    Box w;
    for (int a = 0; a < 3; ++a) {
      double x = u(rng), y = u(rng);
      w.min[a] = std::min(x, y);
      w.max[a] = std::max(x, y);
    }
    for (int d = 0; d <= 3; ++d) {
      const WindowCells wc = h.cells_in_window(w, d);
      ASSERT_EQ(wc.count, brute_window_count(h, w, d)) << "depth " << d << " window " << w;
      std::int64_t sum = 0;
      for (const auto& r : wc.ranges) sum += r.count();
      EXPECT_EQ(sum, wc.count);
    }
  }
}

TEST(CellsInWindow, GridAlignedWindowIsHalfOpen) {
  const GridHierarchy h = GridHierarchy::build(unit_config({4, 4, 4}), 1);
  // Cell centres at 1/16, 3/16, ...; [0, 0.5) holds exactly 4 per axis.
  EXPECT_EQ(h.cells_in_window(Box{{0, 0, 0}, {0.5, 0.5, 0.5}}, 1).count, 64);
  EXPECT_EQ(h.cells_in_window(Box{{0, 0, 0}, {1.0 / 16, 1, 1}}, 1).count, 0);
}

TEST(CellsInWindow, Coverage) {
  GridHierarchy h = GridHierarchy::build(unit_config({4, 4, 4}), 1);
  const Uid leaf = h.at_depth(1)[0];
  h.refine(leaf);
  const Box inside = h.grid(leaf).bbox;
  auto [n_in, cov_in] = h.window_coverage(inside, 2);
  EXPECT_TRUE(cov_in);
  EXPECT_EQ(n_in, 512);
  auto [n_all, cov_all] = h.window_coverage(h.config().domain(), 2);
  EXPECT_FALSE(cov_all);
  EXPECT_EQ(n_all, 16 * 16 * 16);
}
