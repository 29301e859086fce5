#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "portwin/analysis/darcy.hpp"
#include "portwin/analysis/poiseuille.hpp"

using namespace portwin;

namespace {

GridHierarchy box_hierarchy() {
  GridConfig gc;
  gc.domain_min = {0, 0, 0};
  gc.domain_max = {2, 1, 1};
  gc.root_refine = {2, 1, 1};
  gc.sub_refine = {2, 2, 2};
  gc.block_size = {8, 8, 8};
  gc.max_depth = 1;
  return GridHierarchy::build(gc, 1);
}

// Uniform velocity u and pressure p = p0 - g . x everywhere including ghosts.
void fill_linear(GridHierarchy& h, const Vec3& u, const Vec3& g, double p0) {
  for (Uid uid : h.at_depth(1)) {
    const LogicalGrid& lg = h.grid(uid);
    DataGrid& d = h.block(uid);
    const Int3 n = h.config().block_size;
    const Vec3 hc = h.config().cell_size_at(1);
    for (int k = -1; k <= n[2]; ++k)
      for (int j = -1; j <= n[1]; ++j)
        for (int i = -1; i <= n[0]; ++i) {
          const Vec3 x{lg.bbox.min[0] + (i + 0.5) * hc[0], lg.bbox.min[1] + (j + 0.5) * hc[1],
                       lg.bbox.min[2] + (k + 0.5) * hc[2]};
          d.p(i, j, k) = p0 - dot(g, x);
          for (int a = 0; a < 3; ++a) d.vel[a](i, j, k) = u[a];
        }
  }
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

}  // namespace

TEST(HydraulicConductivity, Examples) {
  EXPECT_NEAR(hydraulic_conductivity(1e-10, 1000, 9.81, 1e-3), 9.81e-4, 1e-18);
  EXPECT_EQ(hydraulic_conductivity(0, 1000, 9.81, 1e-3), 0.0);
  const double k = 3.7e-11;
  EXPECT_DOUBLE_EQ(hydraulic_conductivity(2 * k, 1000, 9.81, 1e-3), 2 * hydraulic_conductivity(k, 1000, 9.81, 1e-3));
  EXPECT_THROW(hydraulic_conductivity(k, 1000, 9.81, 0), PreconditionError);
}

TEST(HydraulicConductivity, RoundTripsToPermeability) {
  for (double k : {1e-12, 3.3e-10, 7.1e-8}) {
    const double K = hydraulic_conductivity(k, 998.2, 9.81, 1.002e-3);
    EXPECT_NEAR(K * 1.002e-3 / (998.2 * 9.81), k, 1e-12 * k);
  }
}

TEST(DarcyVelocity, Examples) {
  EXPECT_EQ(darcy_velocity(9.81e-4, 0, 1), 0.0);
  EXPECT_DOUBLE_EQ(darcy_velocity(9.81e-4, -1, 1), 9.81e-4);
  EXPECT_GT(darcy_velocity(1e-3, -0.5, 2), 0.0);
  EXPECT_THROW(darcy_velocity(1e-3, 1, 0), PreconditionError);
}

TEST(SubdomainPermeability, LinearPressureUniformFlow) {
  GridHierarchy h = box_hierarchy();
  const double mu = 2e-3;
  fill_linear(h, {0.3, 0.0, -0.2}, {5.0, 0.0, -4.0}, 7.0);
  const LevelView v(h, 1);
  const Permeability k = subdomain_permeability(v, Box{{0.5, 0.25, 0.25}, {1.5, 0.75, 0.75}}, mu);
  ASSERT_TRUE(k.k[0]);
  EXPECT_NEAR(*k.k[0], 0.3 * mu / 5.0, 1e-15);
  EXPECT_FALSE(k.k[1]);
  ASSERT_TRUE(k.k[2]);
  EXPECT_NEAR(*k.k[2], 0.2 * mu / 4.0, 1e-15);
  EXPECT_NEAR(k.length[0], 1.0, 1e-15);
  EXPECT_EQ(k.fluid_cells, 8 * 4 * 4);
}

TEST(SubdomainPermeability, UniformPressureIsUndefined) {
  GridHierarchy h = box_hierarchy();
  fill_linear(h, {1, 1, 1}, {0, 0, 0}, 3.0);
  const LevelView v(h, 1);
  const Permeability k = subdomain_permeability(v, Box{{0.5, 0.25, 0.25}, {1.5, 0.75, 0.75}}, 1e-3);
  for (int a = 0; a < 3; ++a) EXPECT_FALSE(k.k[a]);
}

TEST(SubdomainPermeability, PressureOffsetDoesNotChangeK) {
  GridHierarchy h = box_hierarchy();
  const Box probe{{0.25, 0, 0}, {1.75, 1, 1}};
  fill_linear(h, {0.1, 0, 0}, {2.0, 0, 0}, 0.0);
  const double k0 = *subdomain_permeability(LevelView(h, 1), probe, 1e-3).k[0];
  fill_linear(h, {0.1, 0, 0}, {2.0, 0, 0}, 1234.5);
  const double k1 = *subdomain_permeability(LevelView(h, 1), probe, 1e-3).k[0];
  EXPECT_NEAR(k1, k0, 1e-10 * k0);
}

TEST(SubdomainPermeability, SolidCellsAreExcluded) {
  GridHierarchy h = box_hierarchy();
  fill_linear(h, {0.1, 0, 0}, {1.0, 0, 0}, 0.0);
  // Zero velocity stored in solid cells must not dilute the average.
  for (Uid uid : h.at_depth(1)) {
    DataGrid& d = h.block(uid);
    d.flag(3, 3, 3) = CellFlag::Solid;
    d.vel[0](3, 3, 3) = 0;
    d.vel[0](2, 3, 3) = 0;
  }
  const LevelView v(h, 1);
  const Permeability k = subdomain_permeability(v, Box{{0, 0, 0}, {2, 1, 1}}, 1.0);
  EXPECT_EQ(k.fluid_cells, 2 * 512 - 2);
  EXPECT_NEAR(k.mean_velocity[0], (0.1 * (2 * 512 - 6) + 0.05 * 4) / (2 * 512 - 2), 1e-14);
}

TEST(SubdomainPermeability, RejectsBoxesOutsideTheDomain) {
  GridHierarchy h = box_hierarchy();
  const LevelView v(h, 1);
  EXPECT_THROW(subdomain_permeability(v, Box{{1.5, 0, 0}, {2.5, 1, 1}}, 1e-3), RangeError);
  EXPECT_THROW(subdomain_permeability(v, Box{{1, 1, 1}, {0, 0, 0}}, 1e-3), RangeError);
}

TEST(SubdomainPermeability, PlanePoiseuilleMatchesAnalyticPermeability) {
  PoiseuilleSetup s;
  s.cells_across = 16;
  const PoiseuilleResult r = run_poiseuille(s);
  EXPECT_LT(r.k_error, 0.05);
  EXPECT_LT(r.profile_error, 0.02);
}

TEST(SeriesStatistics, HandSeries) {
  PermeabilitySeries s;
  for (double k : {1e-10, 2e-10, 3e-10}) {
    DarcySample d;
    d.k[0] = k;
    s.samples.push_back(d);
  }
  compute_statistics(s);
  EXPECT_NEAR(s.mean[0], 2e-10, 1e-22);
  EXPECT_NEAR(s.stddev[0], 0.816496580927726e-10, 1e-22);
  EXPECT_EQ(s.excluded[0], 0);
  EXPECT_EQ(s.excluded[1], 3);
  EXPECT_TRUE(std::isnan(s.mean[1]));
}

TEST(SeriesStatistics, MatchesTwoPassOracle) {
  PermeabilitySeries s;
  std::vector<double> vals;
  for (int i = 0; i < 37; ++i) {
    DarcySample d;
    const double k = 1e-9 * (1.0 + 0.3 * std::sin(1.7 * i));
    if (i % 5 != 0) {
      d.k[0] = k;
      vals.push_back(k);
    }
    s.samples.push_back(d);
  }
  compute_statistics(s);
  double m = 0;
  for (double v : vals) m += v;
  m /= static_cast<double>(vals.size());
  double var = 0;
  for (double v : vals) var += (v - m) * (v - m);
  EXPECT_NEAR(s.mean[0], m, 1e-12 * m);
  EXPECT_NEAR(s.stddev[0], std::sqrt(var / static_cast<double>(vals.size())), 1e-12 * m);
  EXPECT_EQ(s.excluded[0], 8);
}

TEST(PointSeries, UniformRegionHasZeroDeviationAndAnnotatesOutsideProbes) {
  GridHierarchy h = box_hierarchy();
  fill_linear(h, {0.2, 0, 0}, {3.0, 0, 0}, 1.0);
  const LevelView v(h, 1);
  const Box specimen{{0.5, 0, 0}, {2, 1, 1}};
  const std::vector<Vec3> pts{{1.0, 0.5, 0.5}, {1.25, 0.5, 0.5}, {1.5, 0.5, 0.5}, {0.4, 0.5, 0.5}};
  const PermeabilitySeries s = point_series(v, pts, 0.25, 1e-3, specimen);
  ASSERT_EQ(s.samples.size(), 4u);
  EXPECT_EQ(s.samples[3].error, "probe box outside specimen");
  EXPECT_EQ(s.excluded[0], 1);
  EXPECT_NEAR(s.mean[0], 0.2 * 1e-3 / 3.0, 1e-16);
  EXPECT_NEAR(s.stddev[0], 0.0, 1e-18);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(s.samples[i].point, pts[i]);
}

TEST(ExportCsv, OneSampleGivesOneRowPlusStatistics) {
  PermeabilitySeries s;
  DarcySample d;
  d.point = {1, 2, 3};
  d.k[0] = 1.5e-10;
  s.samples.push_back(d);
  compute_statistics(s);
  const std::string text = series_csv(s);
  int lines = 0;
  for (char c : text) lines += c == '\n';
  EXPECT_EQ(lines, 4);
  EXPECT_EQ(text.rfind("x,y,z,k_x,k_y,k_z,flags\n", 0), 0u);
  EXPECT_NE(text.find("undefined_y undefined_z"), std::string::npos);

  const std::string path = ::testing::TempDir() + "series.csv";
  export_csv(s, path);
  const std::string first = read_file(path);
  export_csv(s, path);
  EXPECT_EQ(read_file(path), first);
  EXPECT_EQ(first, text);
  std::remove(path.c_str());
}

TEST(ExportCsv, EmptySeriesAndBadPathFail) {
  PermeabilitySeries s;
  EXPECT_THROW(series_csv(s), PreconditionError);
  DarcySample d;
  s.samples.push_back(d);
  EXPECT_THROW(export_csv(s, "/nonexistent-dir/x.csv"), IoError);
}
