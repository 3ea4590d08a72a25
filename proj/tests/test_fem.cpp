#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "twoscale/assembly.hpp"

using namespace twoscale;

namespace {

constexpr double kPi = std::numbers::pi;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::Io;
}

MeshPtr reference_triangle() {
  return std::make_shared<const TriMesh>(
      finalize_mesh({{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}, {{{0, 1, 2}}}, kUnitCell, 1.0, false));
}

MeshPtr periodic_grid(double h) {
  return std::make_shared<const TriMesh>(build_cell_mesh(Geometry::full(), h));
}

Eigen::MatrixXd dense(const SparseMatrix& m) { return Eigen::MatrixXd(m); }

const TensorCoefficient kIdentity = constant_tensor(Mat2::Identity());

}  // namespace

TEST(Assembly, ReferenceP1Stiffness) {
  const DofMap dm(reference_triangle(), SpaceKind::ScalarP1);
  Eigen::Matrix3d expected;
  expected << 1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5;
  EXPECT_LT((dense(assemble_bilinear(dm, Stiffness{kIdentity})) - expected).norm(), 1e-14);
}

TEST(Assembly, ReferenceP1AndP2Mass) {
  const DofMap p1(reference_triangle(), SpaceKind::ScalarP1);
  Eigen::Matrix3d expected = Eigen::Matrix3d::Constant(1.0 / 24.0);
  expected.diagonal().setConstant(1.0 / 12.0);
  EXPECT_LT((dense(assemble_bilinear(p1, Mass{})) - expected).norm(), 1e-14);
  const DofMap p2(reference_triangle(), SpaceKind::ScalarP2);
  EXPECT_NEAR(dense(assemble_bilinear(p2, Mass{})).sum(), 0.5, 1e-14);
  // P2 vertex functions integrate to zero, edge functions to area/3.
  const Eigen::VectorXd ints = basis_integrals(p2);
  for (int v = 0; v < 3; ++v) EXPECT_NEAR(ints[v], 0.0, 1e-15);
  for (int e = 3; e < 6; ++e) EXPECT_NEAR(ints[e], 0.5 / 3.0, 1e-15);
}

TEST(Assembly, MassSumsToDomainArea) {
  for (const Geometry& g : {Geometry::full(), geometry_one(), geometry_two()}) {
    const auto mesh = std::make_shared<const TriMesh>(build_cell_mesh(g, 0.1));
    for (SpaceKind kind : {SpaceKind::ScalarP1, SpaceKind::ScalarP2}) {
      const DofMap dm(mesh, kind);
      EXPECT_NEAR(dense(assemble_bilinear(dm, Mass{})).sum(), fluid_area(*mesh), 1e-12);
      EXPECT_NEAR(dense(assemble_bilinear(dm, Mass{true})).trace(), fluid_area(*mesh), 1e-12);
    }
  }
}

TEST(Assembly, StiffnessIsSymmetricPsdAndAnnihilatesConstants) {
  const auto mesh = std::make_shared<const TriMesh>(build_cell_mesh(geometry_one(), 0.15));
  const DofMap dm(mesh, SpaceKind::ScalarP1);
  const auto d = [](const QuadPoint& q) {
    Mat2 m = Mat2::Zero();
    m(0, 0) = 2.0 + std::sin(kPi * q.x.x()) * std::sin(kPi * q.x.y());
    m(1, 1) = 2.0 + std::sin(kPi * q.x.x());
    return m;
  };
  const Eigen::MatrixXd k = dense(assemble_bilinear(dm, Stiffness{d}));
  EXPECT_LT((k - k.transpose()).norm(), 1e-12 * k.norm());
  EXPECT_LT((k * Eigen::VectorXd::Ones(k.rows())).norm(), 1e-12 * k.norm());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k);
  EXPECT_GT(eig.eigenvalues().minCoeff(), -1e-10 * k.norm());
}

TEST(Assembly, DriftVanishesForZeroPeclet) {
  const auto mesh = periodic_grid(0.25);
  const DofMap dm(mesh, SpaceKind::ScalarP1);
  const FEField b = interpolate(mesh, 2, [](const Vec2& y) { return Vec2(std::sin(y.y()), 1.0); });
  for (DriftForm form : {DriftForm::Conservative, DriftForm::SkewSymmetric})
    EXPECT_EQ(assemble_bilinear(dm, Drift{&b, 0.0, form}).norm(), 0.0);
}

TEST(Assembly, DriftFormsAgreeForConstantPeriodicVelocity) {
  const auto mesh = periodic_grid(0.1);
  const DofMap dm(mesh, SpaceKind::ScalarP1, {true, {}});
  const FEField b = interpolate(mesh, 2, [](const Vec2&) { return Vec2(0.7, -0.3); });
  auto reduced = [&](DriftForm form) {
    return dense(apply_periodic(make_system(assemble_bilinear(dm, Drift{&b, 2.0, form}),
                                            Eigen::VectorXd::Zero(dm.num_dofs())),
                                dm)
                     .matrix);
  };
  const Eigen::MatrixXd cons = reduced(DriftForm::Conservative);
  const Eigen::MatrixXd skew = reduced(DriftForm::SkewSymmetric);
  EXPECT_LT((skew + skew.transpose()).norm(), 1e-13);
  EXPECT_LT((cons - skew).norm(), 1e-12);
}

TEST(Assembly, SkewDriftIsAntisymmetricForAnyVelocity) {
  const auto mesh = std::make_shared<const TriMesh>(build_cell_mesh(geometry_two(), 0.1));
  const DofMap dm(mesh, SpaceKind::ScalarP1);
  const FEField b =
      interpolate(mesh, 2, [](const Vec2& y) { return Vec2(y.x() * y.y(), std::cos(3.0 * y.x())); });
  const Eigen::MatrixXd n = dense(assemble_bilinear(dm, Drift{&b, 1.5}));
  EXPECT_LT((n + n.transpose()).norm(), 1e-13);
  EXPECT_GT(n.norm(), 1e-3);
}

TEST(Periodic, ThreeByThreeGridHasFourFreeDofs) {
  const auto mesh = periodic_grid(0.5);
  const DofMap dm(mesh, SpaceKind::ScalarP1, {true, {}});
  EXPECT_EQ(dm.free_dof_count(), 4);
  SparseSystem s = make_system(assemble_bilinear(dm, Mass{}), Eigen::VectorXd::Ones(9));
  const SparseSystem once = apply_periodic(s, dm);
  EXPECT_EQ(once.primary_size(), 4);
  EXPECT_NEAR(dense(once.matrix).sum(), 1.0, 1e-14);
  EXPECT_NEAR(once.rhs.sum(), 9.0, 1e-14);
  const SparseSystem twice = apply_periodic(once, dm);
  EXPECT_EQ((dense(twice.matrix) - dense(once.matrix)).norm(), 0.0);
  EXPECT_EQ((twice.rhs - once.rhs).norm(), 0.0);
}

TEST(Periodic, P2EdgeNodesAreIdentified) {
  const auto mesh = periodic_grid(0.25);
  const DofMap p2(mesh, SpaceKind::ScalarP2, {true, {}});
  // Euler characteristic of the torus is zero: E = V + F.
  const DofMap p1(mesh, SpaceKind::ScalarP1, {true, {}});
  const int torus_vertices = p1.free_dof_count();
  const int torus_edges = torus_vertices + mesh->num_triangles();
  EXPECT_EQ(p2.free_dof_count(), torus_vertices + torus_edges);
  const DofMap vec(mesh, SpaceKind::VectorP2, {true, {EdgeTag::Obstacle}});
  EXPECT_EQ(vec.free_dof_count(), 2 * p2.free_dof_count());
}

TEST(Periodic, EmptyPairsLeaveSystemUnchanged) {
  const auto mesh = std::make_shared<const TriMesh>(build_macro_mesh({0.0, 0.0, 1.0, 1.0}, 4, 4));
  const DofMap dm(mesh, SpaceKind::ScalarP1, {true, {}});
  EXPECT_FALSE(dm.periodic());
  const SparseSystem s = make_system(assemble_bilinear(dm, Mass{}), Eigen::VectorXd::Ones(16));
  const SparseSystem r = apply_periodic(s, dm);
  EXPECT_EQ((dense(r.matrix) - dense(s.matrix)).norm(), 0.0);
}

TEST(Periodic, PartialPairsAreRejected) {
  TriMesh mesh = build_cell_mesh(Geometry::full(), 0.25);
  mesh.periodic_pairs.pop_back();
  const auto ptr = std::make_shared<const TriMesh>(std::move(mesh));
  EXPECT_EQ(code_of([&] { DofMap(ptr, SpaceKind::ScalarP1, {true, {}}); }), ErrorCode::MissingPairs);
}

TEST(Constraints, ZeroMeanNeumannSolve) {
  const auto mesh = periodic_grid(0.05);
  const DofMap dm(mesh, SpaceKind::ScalarP1, {true, {}});
  const auto f = [](const QuadPoint& q) { return 8.0 * kPi * kPi * std::sin(2 * kPi * q.x.x()) * std::cos(2 * kPi * q.x.y()); };
  SparseSystem s = make_system(assemble_bilinear(dm, Stiffness{kIdentity}), assemble_load(dm, f));
  s = attach_zero_mean(apply_periodic(std::move(s), dm), dm);
  const Eigen::VectorXd x = solve(s);
  EXPECT_EQ(x.size(), dm.free_dof_count() + 1);
  EXPECT_NEAR(x[dm.free_dof_count()], 0.0, 1e-10);
  const FEField u = dm.make_field(x.head(dm.free_dof_count()));
  const double mean = integrate(*mesh, 2, [&](int t, const auto& l, const auto&, double w) {
    return w * u.value(t, l);
  });
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(u.value(0, Eigen::Vector3d(1.0, 0.0, 0.0)), 0.0, 0.02);
  EXPECT_EQ(code_of([&] { attach_zero_mean(s, dm); }), ErrorCode::DoubleConstraint);
}

TEST(Solver, IdentityAndSaddlePoint) {
  SparseMatrix id(3, 3);
  id.setIdentity();
  const Eigen::Vector3d b(1.0, -2.0, 3.0);
  EXPECT_LT((solve(make_system(id, b)) - b).norm(), 1e-15);

  SparseMatrix a(1, 1);
  a.insert(0, 0) = 2.0;
  SparseSystem s = add_constraint(make_system(a, Eigen::VectorXd::Constant(1, 3.0)),
                                  Eigen::VectorXd::Ones(1), 1.0);
  const Eigen::VectorXd x = solve(s);
  EXPECT_NEAR(x[0], 1.0, 1e-14);
  EXPECT_NEAR(x[1], 1.0, 1e-14);
}

TEST(Solver, SingularSystemIsReported) {
  SparseMatrix z(2, 2);
  z.insert(0, 0) = 1.0;
  z.insert(0, 1) = 1.0;
  z.insert(1, 0) = 1.0;
  z.insert(1, 1) = 1.0;
  const ErrorCode code = code_of([&] { solve(make_system(z, Eigen::Vector2d(1.0, 0.0))); });
  EXPECT_TRUE(code == ErrorCode::SingularMatrix || code == ErrorCode::ResidualTooLarge);
}

TEST(Convergence, DirichletPoissonIsSecondOrderInL2) {
  const auto exact = [](const Vec2& x) { return std::sin(kPi * x.x()) * std::sin(kPi * x.y()); };
  std::vector<double> errors;
  for (int n : {9, 17, 33}) {
    const auto mesh = std::make_shared<const TriMesh>(build_macro_mesh(kUnitCell, n, n));
    const DofMap dm(mesh, SpaceKind::ScalarP1,
                    {false, {EdgeTag::Left, EdgeTag::Right, EdgeTag::Bottom, EdgeTag::Top}});
    const auto f = [&](const QuadPoint& q) { return 2.0 * kPi * kPi * exact(q.x); };
    SparseSystem s = make_system(assemble_bilinear(dm, Stiffness{kIdentity}), assemble_load(dm, f));
    s = apply_periodic(std::move(s), dm);
    const FEField u = dm.make_field(solve(s));
    errors.push_back(std::sqrt(integrate(*mesh, 5, [&](int t, const auto& l, const auto& geo, double w) {
      const double e = u.value(t, l) - exact(geo.point(l));
      return w * e * e;
    })));
  }
  for (std::size_t k = 1; k < errors.size(); ++k)
    EXPECT_NEAR(std::log2(errors[k - 1] / errors[k]), 2.0, 0.3);
}

TEST(Convergence, PeriodicReactionDiffusionP1AndP2) {
  const auto exact = [](const Vec2& x) { return std::sin(2 * kPi * x.x()) * std::cos(2 * kPi * x.y()) + 0.3; };
  for (auto [kind, order] : {std::pair{SpaceKind::ScalarP1, 2.0}, std::pair{SpaceKind::ScalarP2, 3.0}}) {
    std::vector<double> errors;
    for (double h : {0.125, 0.0625, 0.03125}) {
      const auto mesh = periodic_grid(h);
      const DofMap dm(mesh, kind, {true, {}});
      const auto f = [&](const QuadPoint& q) {
        return (8.0 * kPi * kPi + 1.0) * (exact(q.x) - 0.3) + 0.3;
      };
      SparseMatrix a = assemble_bilinear(dm, Stiffness{kIdentity}, 5);
      a += assemble_bilinear(dm, Mass{}, 5);
      const SparseSystem s = apply_periodic(make_system(a, assemble_load(dm, f, 5)), dm);
      const FEField u = dm.make_field(solve(s));
      errors.push_back(std::sqrt(integrate(*mesh, 5, [&](int t, const auto& l, const auto& geo, double w) {
        const double e = u.value(t, l) - exact(geo.point(l));
        return w * e * e;
      })));
    }
    for (std::size_t k = 1; k < errors.size(); ++k)
      EXPECT_NEAR(std::log2(errors[k - 1] / errors[k]), order, 0.3) << "degree " << space_degree(kind);
  }
}

TEST(Solver, DirichletLaplacianReproducesLinearFunction) {
  const auto mesh = std::make_shared<const TriMesh>(build_macro_mesh(kUnitCell, 11, 11));
  const DofMap all(mesh, SpaceKind::ScalarP1);
  const DofMap inner(mesh, SpaceKind::ScalarP1,
                     {false, {EdgeTag::Left, EdgeTag::Right, EdgeTag::Bottom, EdgeTag::Top}});
  const FEField exact = interpolate(mesh, 1, [](const Vec2& x) { return x.x() + x.y(); });
  const SparseMatrix k = assemble_bilinear(all, Stiffness{kIdentity});
  Eigen::VectorXd boundary = exact.coefficients;
  for (int d = 0; d < all.num_dofs(); ++d)
    if (inner.free_index(d) >= 0) boundary[d] = 0.0;
  // Lift the boundary values and solve for the interior.
  const SparseSystem s = apply_periodic(make_system(k, -(k * boundary)), inner);
  const Eigen::VectorXd u = inner.expand(solve(s)) + boundary;
  EXPECT_LT((u - exact.coefficients).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(Constraints, MultiplierAbsorbsIncompatibleLoad) {
  const auto mesh = periodic_grid(0.1);
  const DofMap dm(mesh, SpaceKind::ScalarP1, {true, {}});
  SparseSystem s = make_system(assemble_bilinear(dm, Stiffness{kIdentity}),
                               assemble_load(dm, [](const QuadPoint&) { return 1.0; }));
  s = attach_zero_mean(apply_periodic(std::move(s), dm), dm);
  const Eigen::VectorXd x = solve(s);
  // Constant load against the constant kernel: u = 0 and the multiplier takes the whole load.
  EXPECT_LT(x.head(dm.free_dof_count()).lpNorm<Eigen::Infinity>(), 1e-10);
  EXPECT_NEAR(x[dm.free_dof_count()], 1.0, 1e-10);
}

TEST(Assembly, PeriodicStiffnessQuadraticFormIsNonnegative) {
  const auto mesh = std::make_shared<const TriMesh>(build_cell_mesh(geometry_two(), 0.1));
  const DofMap dm(mesh, SpaceKind::ScalarP1, {true, {}});
  const SparseSystem s = apply_periodic(
      make_system(assemble_bilinear(dm, Stiffness{kIdentity}), Eigen::VectorXd::Zero(dm.num_dofs())), dm);
  std::srand(7);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd x = Eigen::VectorXd::Random(s.primary_size());
    EXPECT_GE(x.dot(s.matrix * x), -1e-12 * x.squaredNorm());
  }
}
