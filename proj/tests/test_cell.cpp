#include <gtest/gtest.h>

#include <map>
#include <random>

#include "twoscale/cell.hpp"
#include "twoscale/fd_oracle.hpp"

using namespace twoscale;

namespace {

MeshPtr cell(const Geometry& g, double h) { return std::make_shared<const TriMesh>(build_cell_mesh(g, h)); }

struct Setup {
  MeshPtr mesh;
  StokesSolution stokes;
};

const Setup& disk(double h) {
  static std::map<double, Setup> cache;
  auto it = cache.find(h);
  if (it == cache.end()) {
    Setup s;
    s.mesh = cell(geometry_one(), h);
    s.stokes = solve_stokes(s.mesh, kDefaultViscosity, default_stokes_force());
    it = cache.emplace(h, std::move(s)).first;
  }
  return it->second;
}

const Setup& rects() {
  static const Setup s = [] {
    Setup out;
    out.mesh = cell(geometry_two(), 0.05);
    out.stokes = solve_stokes(out.mesh, kDefaultViscosity, default_stokes_force());
    return out;
  }();
  return s;
}

}  // namespace

TEST(Cell, ConstantDiffusionOnFullCellHasZeroCorrector) {
  const MeshPtr mesh = cell(Geometry::full(), 0.1);
  const auto stokes = solve_stokes(mesh, kDefaultViscosity, default_stokes_force());
  const CellContext ctx(mesh, constant_diffusion(1.5, 1.5), stokes);
  for (double p : {-4.0, 0.0, 2.5}) {
    const auto sol = solve_cell(ctx, p);
    EXPECT_LE(std::max(sol.gradient_norm[0], sol.gradient_norm[1]), 1e-10);
    EXPECT_LE((sol.dbar - 1.5 * Mat2::Identity()).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Cell, CorrectorHasZeroMean) {
  const CellContext ctx(disk(0.1).mesh, fast_diffusion(), disk(0.1).stokes);
  const auto sol = solve_cell(ctx, 3.0);
  EXPECT_LE(std::abs(sol.mean[0]), 1e-10);
  EXPECT_LE(std::abs(sol.mean[1]), 1e-10);
  EXPECT_GT(sol.gradient_norm[0], 1e-3);
}

TEST(Cell, DiskIdentityDiffusionIsIsotropicAtZeroDrift) {
  const CellContext coarse(disk(0.05).mesh, constant_diffusion(1.0, 1.0), disk(0.05).stokes);
  const Mat2 d = solve_cell(coarse, 0.0).dbar;
  EXPECT_NEAR(d(0, 0), d(1, 1), 1e-3 * d(0, 0));
  EXPECT_LE(std::abs(d(0, 1)), 1e-3);
  EXPECT_LE(std::abs(d(1, 0)), 1e-3);
  EXPECT_LT(d(0, 0), 1.0);

  // At p = 0 the drift drops out, so the reference needs no Stokes solve.
  const MeshPtr fine = cell(geometry_one(), 0.0125);
  const CellContext ref(fine, constant_diffusion(1.0, 1.0), FEField(fine, 2, 2));
  const Mat2 dr = solve_cell(ref, 0.0).dbar;
  EXPECT_LE((d - dr).cwiseAbs().maxCoeff(), 1e-2 * dr(0, 0));
}

TEST(Cell, DiagonalEvenOffDiagonalOdd) {
  const CellContext ctx(rects().mesh, fast_diffusion(), rects().stokes);
  for (double p : {1.0, 4.0, 9.0}) {
    const Mat2 a = solve_cell(ctx, p).dbar, b = solve_cell(ctx, -p).dbar;
    EXPECT_NEAR(a(0, 0), b(0, 0), 1e-8 * a(0, 0));
    EXPECT_NEAR(a(1, 1), b(1, 1), 1e-8 * a(1, 1));
    EXPECT_NEAR(a(0, 1), -b(0, 1), 1e-8 * a.cwiseAbs().maxCoeff());
    EXPECT_NEAR(a(1, 0), -b(1, 0), 1e-8 * a.cwiseAbs().maxCoeff());
  }
}

TEST(Cell, SymmetricPlusSkewReproducesDbar) {
  const CellContext ctx(rects().mesh, fast_diffusion(), rects().stokes);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dist(-10.0, 10.0);
  for (int k = 0; k < 5; ++k) {
    const auto sol = solve_cell(ctx, dist(rng));
    const auto split = sym_skew_split(sol, ctx);
    EXPECT_LE(std::abs(split.J(0, 0)) + std::abs(split.J(1, 1)), 1e-10);
    EXPECT_NEAR(split.J(0, 1), -split.J(1, 0), 1e-10);
    EXPECT_LE((split.A + split.J - sol.dbar).norm(), 1e-8);
    EXPECT_NEAR(split.A(0, 1), split.A(1, 0), 1e-12);
  }
}

TEST(Cell, PositiveDefiniteWithinEnergyBound) {
  const CellContext ctx(disk(0.1).mesh, slow_diffusion(), disk(0.1).stokes);
  for (double p : {-10.0, -1.0, 0.0, 5.0, 10.0}) {
    const auto sol = solve_cell(ctx, p);
    EXPECT_GT(symmetric_min_eigenvalue(sol.dbar), 0.0);
    for (int i = 0; i < 2; ++i) EXPECT_LE(sol.gradient_norm[i], ctx.de_norm(i) / ctx.theta());
  }
}

TEST(Cell, CorrectorIsLipschitzInP) {
  const CellContext ctx(disk(0.1).mesh, fast_diffusion(), disk(0.1).stokes);
  const auto base = solve_cell(ctx, 2.0);
  double previous = 0.0;
  for (double delta : {0.2, 0.1, 0.05}) {
    const auto moved = solve_cell(ctx, 2.0 + delta);
    const double q = corrector_gradient_distance(ctx, base, moved, 0) / delta;
    EXPECT_TRUE(std::isfinite(q));
    if (previous > 0.0) {
      EXPECT_NEAR(q, previous, 0.1 * previous);
    }
    previous = q;
  }
  EXPECT_GT(previous, 0.0);
}

TEST(Cell, RejectsDiffusionBelowTheta) {
  DiffusionCase d = constant_diffusion(1.0, 1.0);
  d.theta = 2.0;
  EXPECT_THROW(CellContext(disk(0.1).mesh, d, disk(0.1).stokes), Error);
}

TEST(FdOracle, ConstantDiffusionIsExact) {
  const FdCellData data{[](const Vec2&) { return 2.0; }, [](const Vec2&) { return 2.0; }, shear_velocity()};
  for (double p : {0.0, 5.0}) {
    const Mat2 d = fd_cell_oracle(data, p, 16);
    EXPECT_LE((d - 2.0 * Mat2::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(FdOracle, AgreesWithFemForVaryingDiffusion) {
  constexpr double pi = std::numbers::pi;
  const FdCellData data{[](const Vec2& y) { return 2.0 + 0.5 * std::sin(2 * pi * y.x()); },
                        [](const Vec2& y) { return 3.0 + 0.5 * std::cos(2 * pi * y.y()); }, shear_velocity()};
  const DiffusionCase dc{"fd",
                         [&](const Vec2& y) {
                           Mat2 d = Mat2::Zero();
                           d(0, 0) = data.d1(y);
                           d(1, 1) = data.d2(y);
                           return d;
                         },
                         1.5};
  const MeshPtr mesh = cell(Geometry::full(), 0.05);
  const CellContext ctx(mesh, dc, interpolate(mesh, 2, shear_velocity()));
  const Mat2 fem = solve_cell(ctx, 3.0).dbar;
  const Mat2 fd = fd_cell_oracle(data, 3.0, 64);
  EXPECT_LE((fem - fd).cwiseAbs().maxCoeff(), 5e-3 * fd.cwiseAbs().maxCoeff());
  EXPECT_LT(fem(0, 0), 2.0);
}
