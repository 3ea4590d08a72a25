#include <gtest/gtest.h>

#include "twoscale/scheme.hpp"

using namespace twoscale;

namespace {

DispersionTable linear_table() {
  DispersionTable t;
  t.geometry = "synthetic";
  t.diffusion_case = "fast";
  for (double p : sweep_nodes(-2.0, 2.0, 41)) {
    Mat2 d;
    d << 1.0 + 0.2 * p * p, 0.1 * p, -0.1 * p, 0.5 + 0.1 * p * p;
    t.p_nodes.push_back(p);
    t.tensors.push_back(d);
  }
  return t;
}

MacroProblem small_problem(double source = 5.0) {
  MacroProblem pb;
  pb.mesh = std::make_shared<const TriMesh>(build_macro_mesh(Rect{0, 0, 1, 2}, 8, 16));
  pb.T = 1.0;
  pb.dt = 0.1;
  pb.g = [](const Vec2& x) { return std::exp(-10.0 * (x - Vec2(0.5, 0.5)).squaredNorm()); };
  pb.f = [source](double, const Vec2& x) { return (x - Vec2(0.5, 0.5)).norm() < 0.25 ? source : 0.0; };
  return pb;
}

}  // namespace

TEST(Scheme, ConfigValidation) {
  IterationConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.tol = 0.0;
  try {
    cfg.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigInvalid);
  }
  cfg.tol = 1e-7;
  cfg.max_iter = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Scheme, ConstantNonlinearityConvergesInTwoIterations) {
  const auto table = linear_table();
  const auto g = Nonlinearity::constant(1.0);
  for (auto mode : {IterationMode::TrajectoryFixedPoint, IterationMode::TimeLaggedSweep}) {
    IterationConfig cfg;
    cfg.mode = mode;
    const auto result = iterate(small_problem(), DispersionSource::table(table), g, g, cfg);
    EXPECT_TRUE(result.report.converged);
    EXPECT_LE(result.report.iterations, 2);
    EXPECT_EQ(result.report.errors.back(), 0.0);
  }
}

TEST(Scheme, ConstantNonlinearityReproducesPlainSolve) {
  const auto table = linear_table();
  const auto g = Nonlinearity::constant(1.0);
  const auto result = iterate(small_problem(), DispersionSource::table(table), g, g, IterationConfig{});
  MacroProblem plain = small_problem();
  plain.tensor = constant_provider(interp(table, 1.0));
  const MacroSolver solver(plain);
  const auto reference = solver.solve_time_lagged();
  EXPECT_LE(trajectory_distance(solver, result.trajectory, reference), 1e-12);
}

TEST(Scheme, SingleIterationReportsNotConverged) {
  const auto table = linear_table();
  IterationConfig cfg;
  cfg.max_iter = 1;
  const auto g = Nonlinearity::tasep();
  const auto result = iterate(small_problem(), DispersionSource::table(table), g, g, cfg);
  EXPECT_FALSE(result.report.converged);
  EXPECT_EQ(result.report.iterations, 1);
  EXPECT_EQ(result.report.errors.size(), 1u);
  EXPECT_GT(result.report.errors[0], 1e-7);
}

TEST(Scheme, FixedPointErrorsContractAndResidualIsSmall) {
  const auto table = linear_table();
  IterationConfig cfg;
  cfg.check_fixed_point = true;
  const auto g = Nonlinearity::linear(0.2, -0.5);
  const auto result = iterate(small_problem(1.0), DispersionSource::table(table), g, g, cfg);
  ASSERT_TRUE(result.report.converged);
  const auto& e = result.report.errors;
  for (std::size_t k = 2; k < e.size(); ++k) EXPECT_LT(e[k], e[k - 1]);
  EXPECT_LE(result.report.fixed_point_residual, 10.0 * cfg.tol);
  EXPECT_EQ(result.report.clamp_warnings, 0);
}

TEST(Scheme, ClampsAreCounted) {
  const auto table = linear_table();
  const auto g = Nonlinearity::linear(0.0, 10.0);  // p = 10u leaves [-2, 2] near the source
  const auto result = iterate(small_problem(), DispersionSource::table(table), g, g, IterationConfig{});
  EXPECT_GT(result.report.clamp_warnings, 0);
}

TEST(Scheme, DirectSourceMemoizesAndMatchesTable) {
  const auto mesh = std::make_shared<const TriMesh>(build_cell_mesh(geometry_two(), 0.1));
  const auto stokes = solve_stokes(mesh, kDefaultViscosity, default_stokes_force());
  const CellContext ctx(mesh, fast_diffusion(), stokes);
  const auto table = build_table(ctx, -1.0, 1.0, 3);
  const auto direct = DispersionSource::direct(ctx, 2);
  EXPECT_EQ(direct.mode(), DispersionMode::DirectPerNode);
  direct.prefetch({-1.0, 0.0, 1.0, 0.0});
  EXPECT_EQ(direct.solves(), 3);
  for (int k = 0; k < table.size(); ++k) EXPECT_EQ(direct(table.p_nodes[k]), table.tensors[k]);
  EXPECT_EQ(direct.solves(), 3);
  direct(0.5);
  EXPECT_EQ(direct.solves(), 4);
  EXPECT_EQ(direct.clamps(), 0);
}

TEST(Scheme, ModesAgreeForConstantNonlinearity) {
  const auto mesh = std::make_shared<const TriMesh>(build_cell_mesh(geometry_two(), 0.1));
  const auto stokes = solve_stokes(mesh, kDefaultViscosity, default_stokes_force());
  const CellContext ctx(mesh, fast_diffusion(), stokes);
  const auto table = build_table(ctx, -1.0, 1.0, 3);
  MacroProblem pb = small_problem();
  pb.sampling = TensorSampling::Vertex;
  const auto g = Nonlinearity::constant(1.0);
  const auto cmp = cross_validate_modes(pb, table, ctx, g, g, IterationConfig{});
  EXPECT_LE(cmp.max_difference(), 1e-9);
  EXPECT_EQ(cmp.reports.size(), 4u);
  for (const auto& [name, report] : cmp.reports) EXPECT_LE(report.iterations, 2) << name;
}

TEST(Scheme, ReportCsvHasOneRowPerIteration) {
  IterationReport r;
  r.errors = {1.0, 0.1};
  r.wall_times = {0.5, 0.4};
  std::ostringstream out;
  r.write_csv(out);
  EXPECT_EQ(out.str(), "iteration,e_k,wall_time\n1,1,0.5\n2,0.1,0.4\n");
}
