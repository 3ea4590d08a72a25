#include <gtest/gtest.h>

#include <sstream>

#include "twoscale/dispersion.hpp"

using namespace twoscale;

namespace {

Mat2 tensor_at(double p) {
  Mat2 d;
  d << 2.0 + 0.1 * p * p, 0.3 * p, -0.3 * p, 1.0 + 0.05 * p * p;
  return d;
}

DispersionTable synthetic(int n = 11) {
  DispersionTable t;
  t.geometry = "synthetic";
  t.diffusion_case = "fast";
  t.h = 0.1;
  for (double p : sweep_nodes(-5.0, 5.0, n)) {
    t.p_nodes.push_back(p);
    t.tensors.push_back(tensor_at(p));
  }
  return t;
}

}  // namespace

TEST(Dispersion, SweepNodesAreEquidistant) {
  const auto nodes = sweep_nodes(-10.0, 10.0, 101);
  ASSERT_EQ(nodes.size(), 101u);
  EXPECT_EQ(nodes.front(), -10.0);
  EXPECT_EQ(nodes.back(), 10.0);
  EXPECT_NEAR(nodes[50], 0.0, 1e-15);
  EXPECT_NEAR(nodes[1] - nodes[0], 0.2, 1e-14);
  EXPECT_THROW(sweep_nodes(0.0, 1.0, 1), Error);
  EXPECT_THROW(sweep_nodes(1.0, 0.0, 5), Error);
}

TEST(Dispersion, InterpolationExactAtNodesLinearBetween) {
  const auto t = synthetic();
  for (int k = 0; k < t.size(); ++k) EXPECT_EQ(interp(t, t.p_nodes[k]), t.tensors[k]);
  for (int k = 0; k + 1 < t.size(); ++k) {
    const double mid = 0.5 * (t.p_nodes[k] + t.p_nodes[k + 1]);
    const Mat2 expected = 0.5 * (t.tensors[k] + t.tensors[k + 1]);
    EXPECT_LE((interp(t, mid) - expected).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Dispersion, ClampsOutsideRangeAndCounts) {
  const auto t = synthetic();
  ClampCounter clamps;
  EXPECT_EQ(interp(t, -7.0, &clamps), t.tensors.front());
  EXPECT_EQ(interp(t, 12.0, &clamps), t.tensors.back());
  EXPECT_EQ(interp(t, 3.3, &clamps), interp(t, 3.3));
  EXPECT_EQ(clamps.count.load(), 2);
  EXPECT_EQ(interp(t, std::nan(""), &clamps), t.tensors.front());
  EXPECT_EQ(clamps.count.load(), 3);
}

TEST(Dispersion, ValidateRejectsBadTables) {
  auto t = synthetic();
  EXPECT_NO_THROW(t.validate());
  auto single = t;
  single.p_nodes.resize(1);
  single.tensors.resize(1);
  EXPECT_THROW(single.validate(), Error);
  auto unsorted = t;
  std::swap(unsorted.p_nodes[2], unsorted.p_nodes[3]);
  EXPECT_THROW(unsorted.validate(), Error);
  auto indefinite = t;
  indefinite.tensors[4](1, 1) = -1.0;
  try {
    indefinite.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PositivityViolated);
  }
}

TEST(Dispersion, TableRoundTrip) {
  const auto t = synthetic(21);
  std::stringstream buffer;
  write_table(buffer, t);
  const auto r = read_table(buffer);
  EXPECT_EQ(r.geometry, t.geometry);
  EXPECT_EQ(r.diffusion_case, t.diffusion_case);
  EXPECT_EQ(r.h, t.h);
  ASSERT_EQ(r.size(), t.size());
  for (int k = 0; k < t.size(); ++k) {
    EXPECT_EQ(r.p_nodes[k], t.p_nodes[k]);
    EXPECT_EQ(r.tensors[k], t.tensors[k]);
  }
}

TEST(Dispersion, TruncatedTableIsRejected) {
  std::stringstream buffer;
  write_table(buffer, synthetic());
  std::string text = buffer.str();
  text.resize(text.size() / 2);
  std::istringstream in(text);
  EXPECT_THROW(read_table(in), Error);
}

TEST(Dispersion, TableKeyNamesEveryIngredient) {
  const auto key = table_key("disk", "slow", 0.025, -10, 10, 101);
  for (const char* part : {"disk", "slow", "0.025", "-10", "101"}) EXPECT_NE(key.find(part), std::string::npos);
  EXPECT_NE(key, table_key("disk", "fast", 0.025, -10, 10, 101));
}

TEST(Nonlinearity, Values) {
  EXPECT_DOUBLE_EQ(Nonlinearity::tasep()(0.25), 0.5);
  EXPECT_DOUBLE_EQ(Nonlinearity::constant(0.7)(123.0), 0.7);
  EXPECT_TRUE(Nonlinearity::constant(0.7).is_constant());
  EXPECT_FALSE(Nonlinearity::tasep().is_constant());
  EXPECT_NEAR(Nonlinearity::reciprocal_abs()(0.5), 1e4, 1e-8);
  EXPECT_NEAR(Nonlinearity::reciprocal_abs()(0.0), 1.0 / 1.0001, 1e-14);
  const auto tab = Nonlinearity::tabulated({0.0, 1.0, 2.0}, {1.0, 3.0, 2.0});
  EXPECT_DOUBLE_EQ(tab(0.5), 2.0);
  EXPECT_DOUBLE_EQ(tab(-1.0), 1.0);
  EXPECT_DOUBLE_EQ(tab(5.0), 2.0);
  EXPECT_THROW(Nonlinearity::reciprocal_abs(0.0), Error);
  EXPECT_THROW(Nonlinearity::tabulated({1.0, 0.0}, {1.0, 2.0}), Error);
}

TEST(Nonlinearity, DstarConventions) {
  const auto t1 = synthetic();
  auto t2 = synthetic();
  for (auto& d : t2.tensors) d *= 10.0;
  const auto g1 = Nonlinearity::constant(1.0), g2 = Nonlinearity::constant(-2.0);
  const Mat2 a = interp(t1, 1.0), b = interp(t2, -2.0);
  const Mat2 col = dstar_at(t1, t2, g1, g2, 0.3, IndexConvention::Column);
  EXPECT_EQ(col.col(0), a.col(0));
  EXPECT_EQ(col.col(1), b.col(1));
  const Mat2 row = dstar_at(t1, t2, g1, g2, 0.3, IndexConvention::Row);
  EXPECT_EQ(row.row(0), a.row(0));
  EXPECT_EQ(row.row(1), b.row(1));
  // Same table and same parameter: both conventions reduce to D̄(G(u)).
  EXPECT_EQ(dstar_at(t1, t1, Nonlinearity::tasep(), Nonlinearity::tasep(), 0.2), interp(t1, 0.6));
}

TEST(Dispersion, BuiltTableMatchesDirectSolves) {
  const auto mesh = std::make_shared<const TriMesh>(build_cell_mesh(geometry_two(), 0.1));
  const auto stokes = solve_stokes(mesh, kDefaultViscosity, default_stokes_force());
  const CellContext ctx(mesh, fast_diffusion(), stokes);
  const auto table = build_table(ctx, -4.0, 4.0, 5, 2, "two_rects");
  ASSERT_EQ(table.size(), 5);
  for (int k = 0; k < table.size(); ++k)
    EXPECT_LE((table.tensors[k] - solve_cell(ctx, table.p_nodes[k]).dbar).cwiseAbs().maxCoeff(), 1e-13);
  const Mat2 between = interp(table, 1.0);
  const Mat2 exact = solve_cell(ctx, 1.0).dbar;
  EXPECT_LE((between - exact).cwiseAbs().maxCoeff(), 0.05 * exact.cwiseAbs().maxCoeff());
}
