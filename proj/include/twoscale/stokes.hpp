#pragma once

#include <cmath>
#include <functional>
#include <numbers>

#include <Eigen/SparseCholesky>

#include "twoscale/assembly.hpp"

namespace twoscale {

using VectorFunction = std::function<Vec2(const Vec2&)>;

/// Body force used for the drift field: (10 sin 2πy1 sin 2πy2, 10 sin 2πy1 cos 2πy2).
inline VectorFunction default_stokes_force(double amplitude = 10.0) {
  return [amplitude](const Vec2& y) {
    constexpr double k = 2.0 * std::numbers::pi;
    const double s1 = std::sin(k * y.x());
    return Vec2(amplitude * s1 * std::sin(k * y.y()), amplitude * s1 * std::cos(k * y.y()));
  };
}

inline constexpr double kDefaultViscosity = 0.01;

/// Schur: direct factorisation of the velocity block and preconditioned CG on the pressure
/// Schur complement. Monolithic: one sparse LU of the whole bordered saddle matrix.
enum class StokesSolver { Schur, Monolithic };

struct StokesOptions {
  int quad_degree = 4;
  double tolerance = 1e-10;
  StokesSolver solver = StokesSolver::Schur;
  int max_cg_iterations = 1000;
};

struct StokesDiagnostics {
  bool no_obstacle = false;       // Full cell: translations removed by zero-mean velocity rows
  double residual = 0.0;          // relative residual of the bordered system
  double weak_divergence = 0.0;   // max over pressure basis functions q of |∫ q div B|
  double divergence_l2 = 0.0;     // ||div B||_L2 of the P2 field (diagnostic only)
  double gradient_l2 = 0.0;       // ||∇B||_L2
  double dissipation = 0.0;       // μ ∫ |∇B|²
  double work = 0.0;              // ∫ F·B
  double pressure_mean = 0.0;     // ∫ p
  double velocity_max = 0.0;      // max nodal |B|
  int cg_iterations = 0;
  int velocity_dofs = 0;
  int pressure_dofs = 0;
};

/// Taylor–Hood (P2 velocity, P1 pressure) solution of the periodic cell Stokes problem.
struct StokesSolution {
  FEField velocity;
  FEField pressure;
  double mu = kDefaultViscosity;
  StokesDiagnostics diagnostics;
};

/// Assembled and reduced Taylor–Hood system with the data needed to post-process it.
struct StokesAssembly {
  SparseSystem system;
  SparseMatrix full;                       // unreduced [A B^T; B 0]
  Eigen::SparseMatrix<double> prolongation;  // full = P * free
  Eigen::SparseMatrix<double> pressure_prolongation;
  Eigen::VectorXd load;
  Eigen::VectorXd pressure_integrals;
  Eigen::SparseMatrix<double> pressure_mass;  // reduced P1 mass, CG preconditioner
  int velocity_dofs = 0;  // unreduced
  int pressure_dofs = 0;  // unreduced
  int free_velocity = 0;
  int free_pressure = 0;
  bool no_obstacle = false;
};

inline StokesAssembly assemble_stokes(const MeshPtr& mesh, double mu, const VectorFunction& force,
                                      const StokesOptions& options = {}) {
  require(mu > 0.0 && std::isfinite(mu), ErrorCode::Precondition, "viscosity must be positive");
  require(static_cast<bool>(force), ErrorCode::Precondition, "missing body force");
  const TriMesh& m = *mesh;
  const bool no_obstacle = !m.has_tag(EdgeTag::Obstacle);
  if (no_obstacle)
    log::warn("NoObstacle", "cell has no obstacle; velocity translations fixed by zero-mean rows");

  const DofMap vel(mesh, SpaceKind::VectorP2, {true, {EdgeTag::Obstacle}});
  const DofMap pre(mesh, SpaceKind::ScalarP1Pressure, {true, {}});
  const int n2 = vel.num_nodes();
  const int nv = vel.num_dofs();
  const int np = pre.num_dofs();
  const int total = nv + np;

  const auto& rule = triangle_rule(options.quad_degree);
  Triplets entries;
  entries.reserve(static_cast<std::size_t>(m.num_triangles()) * (2 * 36 + 4 * 18));
  Eigen::VectorXd load = Eigen::VectorXd::Zero(total);
  Eigen::VectorXd vel_integrals = Eigen::VectorXd::Zero(n2);
  Eigen::VectorXd pre_integrals = Eigen::VectorXd::Zero(np);

  double phi[6], psi[3];
  Vec2 grad[6];
  Eigen::Matrix<double, 6, 6> a;
  Eigen::Matrix<double, 3, 6> bx, by;
  Triplets mass_entries;
  mass_entries.reserve(static_cast<std::size_t>(m.num_triangles()) * 9);
  for (int t = 0; t < m.num_triangles(); ++t) {
    const ElementGeometry geo(m, t);
    const auto vn = lagrange_element_nodes(m, 2, t);
    const auto pn = lagrange_element_nodes(m, 1, t);
    a.setZero();
    bx.setZero();
    by.setZero();
    for (int q = 0; q < rule.size(); ++q) {
      const auto& l = rule.points[q];
      const double w = geo.area * rule.weights[q];
      shape_values(2, l, phi);
      shape_values(1, l, psi);
      shape_gradients(2, l, geo, grad);
      const Vec2 f = force(geo.point(l));
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) a(i, j) += w * mu * grad[i].dot(grad[j]);
        load[vel.dof(0, vn[i])] += w * f.x() * phi[i];
        load[vel.dof(1, vn[i])] += w * f.y() * phi[i];
        vel_integrals[vn[i]] += w * phi[i];
      }
      for (int r = 0; r < 3; ++r) {
        pre_integrals[pn[r]] += w * psi[r];
        for (int j = 0; j < 6; ++j) {
          bx(r, j) -= w * psi[r] * grad[j].x();
          by(r, j) -= w * psi[r] * grad[j].y();
        }
      }
    }
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) {
        entries.emplace_back(vel.dof(0, vn[i]), vel.dof(0, vn[j]), a(i, j));
        entries.emplace_back(vel.dof(1, vn[i]), vel.dof(1, vn[j]), a(i, j));
      }
    }
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        mass_entries.emplace_back(pn[r], pn[c], geo.area * (r == c ? 2.0 : 1.0) / 12.0);
    for (int r = 0; r < 3; ++r) {
      const int row = nv + pn[r];
      for (int j = 0; j < 6; ++j) {
        entries.emplace_back(row, vel.dof(0, vn[j]), bx(r, j));
        entries.emplace_back(row, vel.dof(1, vn[j]), by(r, j));
        entries.emplace_back(vel.dof(0, vn[j]), row, bx(r, j));
        entries.emplace_back(vel.dof(1, vn[j]), row, by(r, j));
      }
    }
  }
  SparseMatrix full(total, total);
  full.setFromTriplets(entries.begin(), entries.end());

  const Eigen::SparseMatrix<double> pv = vel.prolongation();
  const Eigen::SparseMatrix<double> pp = pre.prolongation();
  const int fv = vel.free_dof_count();
  const int fp = pre.free_dof_count();
  Triplets pe;
  pe.reserve(pv.nonZeros() + pp.nonZeros());
  for (int k = 0; k < pv.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(pv, k); it; ++it)
      pe.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < pp.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(pp, k); it; ++it)
      pe.emplace_back(nv + it.row(), fv + it.col(), it.value());
  Eigen::SparseMatrix<double> prolong(total, fv + fp);
  prolong.setFromTriplets(pe.begin(), pe.end());
  const Eigen::SparseMatrix<double> pt = prolong.transpose();

  SparseSystem system;
  system.matrix = SparseMatrix(pt * full * prolong);
  system.matrix.prune(0.0);
  system.rhs = pt * load;
  system.reduced = true;

  Eigen::VectorXd pressure_row = Eigen::VectorXd::Zero(total);
  pressure_row.tail(np) = pre_integrals;
  system = add_constraint(std::move(system), pt * pressure_row, 0.0);
  if (no_obstacle) {
    for (int c = 0; c < 2; ++c) {
      Eigen::VectorXd row = Eigen::VectorXd::Zero(total);
      row.segment(c * n2, n2) = vel_integrals;
      system = add_constraint(std::move(system), pt * row, 0.0);
    }
  }

  StokesAssembly out;
  out.system = std::move(system);
  out.full = std::move(full);
  out.prolongation = std::move(prolong);
  out.pressure_prolongation = pp;
  out.load = std::move(load);
  out.pressure_integrals = std::move(pre_integrals);
  Eigen::SparseMatrix<double> mass(np, np);
  mass.setFromTriplets(mass_entries.begin(), mass_entries.end());
  out.pressure_mass = pp.transpose() * mass * pp;
  out.velocity_dofs = nv;
  out.pressure_dofs = np;
  out.free_velocity = fv;
  out.free_pressure = fp;
  out.no_obstacle = no_obstacle;
  return out;
}

namespace detail {

/// Block elimination of the bordered Taylor–Hood system. The velocity block is two copies of
/// one scalar P2 operator (bordered by its mean row on obstacle-free cells) and is factorised
/// once; the pressure solves  B A^{-1} B^T p = B A^{-1} f  by CG preconditioned with μ M_p^{-1}.
/// Returns the bordered solution vector [u; p; multipliers].
inline Eigen::VectorXd solve_stokes_schur(const StokesAssembly& sa, double mu,
                                          const StokesOptions& options, int& iterations) {
  const SparseSystem& sys = sa.system;
  const int fv = sa.free_velocity;
  const int fp = sa.free_pressure;
  const int fs = fv / 2;
  const SparseMatrix scalar_block = sys.matrix.topLeftCorner(fs, fs);
  const SparseMatrix b = sys.matrix.block(fv, 0, fp, fv);
  const SparseMatrix bt = b.transpose();

  SparseSystem velocity = make_system(scalar_block, Eigen::VectorXd::Zero(fs));
  if (sa.no_obstacle) velocity = add_constraint(std::move(velocity), sys.constraints[1].head(fs), 0.0);
  const DirectSolver a_solver(velocity, 1e-2 * options.tolerance);
  const int nb = velocity.size();

  Eigen::VectorXd multipliers = Eigen::VectorXd::Zero(2);
  auto apply_inverse = [&](const Eigen::VectorXd& rhs, bool keep_multipliers) {
    Eigen::VectorXd out(fv);
    for (int c = 0; c < 2; ++c) {
      Eigen::VectorXd local = Eigen::VectorXd::Zero(nb);
      local.head(fs) = rhs.segment(c * fs, fs);
      const Eigen::VectorXd sol = a_solver.solve(local);
      out.segment(c * fs, fs) = sol.head(fs);
      if (keep_multipliers && sa.no_obstacle) multipliers[c] = sol[fs];
    }
    return out;
  };

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> mass(sa.pressure_mass);
  require(mass.info() == Eigen::Success, ErrorCode::SingularMatrix, "pressure mass factorisation failed");

  const Eigen::VectorXd f = sys.rhs.head(fv);
  const Eigen::VectorXd g = b * apply_inverse(f, false);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(fp);
  Eigen::VectorXd r = g;
  const double r0 = g.norm();
  iterations = 0;
  if (r0 > 0.0) {
    Eigen::VectorXd z = mu * mass.solve(r);
    Eigen::VectorXd dir = z;
    double rz = r.dot(z);
    while (r.norm() > 1e-3 * options.tolerance * r0) {
      require(iterations < options.max_cg_iterations, ErrorCode::ResidualTooLarge,
              "pressure Schur CG did not converge");
      const Eigen::VectorXd sd = b * apply_inverse(bt * dir, false);
      const double alpha = rz / dir.dot(sd);
      p += alpha * dir;
      r -= alpha * sd;
      z = mu * mass.solve(r);
      const double rz_new = r.dot(z);
      dir = z + (rz_new / rz) * dir;
      rz = rz_new;
      ++iterations;
    }
  }
  const Eigen::VectorXd& c = sys.constraints[0].tail(fp);
  p -= (c.dot(p) / c.sum()) * Eigen::VectorXd::Ones(fp);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(sys.size());
  x.head(fv) = apply_inverse(f - bt * p, true);
  x.segment(fv, fp) = p;
  if (sa.no_obstacle) x.tail(2) = multipliers;
  return x;
}

}  // namespace detail

/// Solves  -μΔB + ∇p = F,  div B = 0  on the fluid cell with B = 0 on obstacle edges,
/// periodic B and p, and zero-mean pressure.
inline StokesSolution solve_stokes(const MeshPtr& mesh, double mu, const VectorFunction& force,
                                   const StokesOptions& options = {}) {
  const StokesAssembly sa = assemble_stokes(mesh, mu, force, options);
  const TriMesh& m = *mesh;
  const SparseSystem& system = sa.system;
  const int nv = sa.velocity_dofs;
  const int np = sa.pressure_dofs;
  const Eigen::VectorXd rhs = system.bordered_rhs();
  int cg_iterations = 0;
  const Eigen::VectorXd x = options.solver == StokesSolver::Monolithic
                                ? DirectSolver(system, options.tolerance).solve(rhs)
                                : detail::solve_stokes_schur(sa, mu, options, cg_iterations);
  const Eigen::VectorXd x_full = sa.prolongation * x.head(sa.free_velocity + sa.free_pressure);

  StokesSolution sol;
  sol.mu = mu;
  sol.velocity = FEField(mesh, 2, 2);
  sol.velocity.coefficients = x_full.head(nv);
  sol.pressure = FEField(mesh, 1, 1);
  sol.pressure.coefficients = x_full.tail(np);

  StokesDiagnostics& d = sol.diagnostics;
  d.no_obstacle = sa.no_obstacle;
  d.cg_iterations = cg_iterations;
  d.velocity_dofs = sa.free_velocity;
  d.pressure_dofs = sa.free_pressure;
  const double rnorm = rhs.norm();
  d.residual = (system.bordered() * x - rhs).norm() / (rnorm > 0 ? rnorm : 1.0);
  require(d.residual <= options.tolerance, ErrorCode::ResidualTooLarge,
          "Stokes residual " + std::to_string(d.residual) + " exceeds tolerance");
  const Eigen::VectorXd coupling = sa.full * x_full;
  d.weak_divergence = (sa.pressure_prolongation.transpose() * coupling.tail(np)).lpNorm<Eigen::Infinity>();
  d.pressure_mean = sa.pressure_integrals.dot(sol.pressure.coefficients);
  d.work = sa.load.head(nv).dot(sol.velocity.coefficients);
  d.velocity_max = sol.velocity.max_abs_nodal_vector();
  double div2 = 0.0, grad2 = 0.0;
  const auto& r5 = triangle_rule(4);
  for (int t = 0; t < m.num_triangles(); ++t) {
    const ElementGeometry geo(m, t);
    for (int q = 0; q < r5.size(); ++q) {
      const double w = geo.area * r5.weights[q];
      const Vec2 g0 = sol.velocity.gradient(t, r5.points[q], geo, 0);
      const Vec2 g1 = sol.velocity.gradient(t, r5.points[q], geo, 1);
      const double div = g0.x() + g1.y();
      div2 += w * div * div;
      grad2 += w * (g0.squaredNorm() + g1.squaredNorm());
    }
  }
  d.divergence_l2 = std::sqrt(div2);
  d.gradient_l2 = std::sqrt(grad2);
  d.dissipation = mu * grad2;
  return sol;
}

inline StokesSolution solve_stokes(const TriMesh& mesh, double mu, const VectorFunction& force,
                                   const StokesOptions& options = {}) {
  return solve_stokes(std::make_shared<const TriMesh>(mesh), mu, force, options);
}

}  // namespace twoscale
