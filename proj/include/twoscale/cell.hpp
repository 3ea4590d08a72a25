#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>

#include "twoscale/stokes.hpp"

namespace twoscale {

using TensorFunction = std::function<Mat2(const Vec2&)>;

/// Micro-diffusion matrix D(y) with its coercivity constant θ.
struct DiffusionCase {
  std::string label;
  TensorFunction D;
  double theta = 1.0;
};

/// D = diag(2 + sin πy1 sin πy2, 2 + sin πy1), θ = 1.
inline DiffusionCase fast_diffusion() {
  return {"fast",
          [](const Vec2& y) {
            constexpr double pi = std::numbers::pi;
            const double s1 = std::sin(pi * y.x());
            Mat2 d = Mat2::Zero();
            d(0, 0) = 2.0 + s1 * std::sin(pi * y.y());
            d(1, 1) = 2.0 + s1;
            return d;
          },
          1.0};
}

/// D = diag(0.05 + sin πy1 sin πy2 / 50, 0.05 + sin πy1 / 50), θ = 0.03.
inline DiffusionCase slow_diffusion() {
  return {"slow",
          [](const Vec2& y) {
            constexpr double pi = std::numbers::pi;
            const double s1 = std::sin(pi * y.x());
            Mat2 d = Mat2::Zero();
            d(0, 0) = 0.05 + s1 * std::sin(pi * y.y()) / 50.0;
            d(1, 1) = 0.05 + s1 / 50.0;
            return d;
          },
          0.03};
}

inline DiffusionCase constant_diffusion(double d11, double d22, std::string label = "constant") {
  return {std::move(label),
          [d11, d22](const Vec2&) {
            Mat2 d = Mat2::Zero();
            d(0, 0) = d11;
            d(1, 1) = d22;
            return d;
          },
          std::min(d11, d22)};
}

struct CellOptions {
  DriftForm drift_form = DriftForm::SkewSymmetric;
  int quad_degree = 4;
  double tolerance = 1e-10;
  double energy_slack = 1e-2;
  double peclet_limit = 1.0;
};

inline double symmetric_min_eigenvalue(const Mat2& m) {
  const Mat2 s = 0.5 * (m + m.transpose());
  return Eigen::SelfAdjointEigenSolver<Mat2>(s, Eigen::EigenvaluesOnly).eigenvalues()[0];
}

/// Everything about the cell problem that does not depend on p: periodic P1 space, the
/// tensor at every quadrature point, and the reduced stiffness, unit-p drift and loads.
class CellContext {
 public:
  CellContext(MeshPtr mesh, DiffusionCase diffusion, FEField velocity, CellOptions options = {})
      : mesh_(std::move(mesh)), diffusion_(std::move(diffusion)), velocity_(std::move(velocity)),
        options_(options), dofmap_(mesh_, SpaceKind::ScalarP1, {true, {}}) {
    require(diffusion_.theta > 0.0, ErrorCode::Precondition, "coercivity constant must be positive");
    require(velocity_.components == 2 && velocity_.mesh &&
                velocity_.mesh->num_triangles() == mesh_->num_triangles(),
            ErrorCode::DimensionMismatch, "drift field must be a vector field on the cell mesh");
    const TriMesh& m = *mesh_;
    const auto& rule = triangle_rule(options_.quad_degree);
    nq_ = rule.size();
    tensors_.resize(static_cast<std::size_t>(m.num_triangles()) * nq_);
    for (int t = 0; t < m.num_triangles(); ++t) {
      const ElementGeometry geo(m, t);
      h_max_ = std::max({h_max_, (geo.corners[0] - geo.corners[1]).norm(),
                         (geo.corners[1] - geo.corners[2]).norm(), (geo.corners[2] - geo.corners[0]).norm()});
      for (int q = 0; q < nq_; ++q) {
        const Mat2 d = diffusion_.D(geo.point(rule.points[q]));
        const double lambda = symmetric_min_eigenvalue(d);
        require(lambda >= diffusion_.theta * (1.0 - 1e-12), ErrorCode::CoercivityViolated,
                "D has eigenvalue " + std::to_string(lambda) + " below theta");
        tensors_[t * nq_ + q] = d;
        for (int i = 0; i < 2; ++i)
          de_norm_sq_[i] += geo.area * rule.weights[q] * d.col(i).squaredNorm();
      }
    }
    area_ = fluid_area(m);
    velocity_max_ = velocity_.max_abs_nodal_vector();

    const auto reduce = [&](const SparseMatrix& full) {
      return apply_periodic(make_system(full, Eigen::VectorXd::Zero(full.rows())), dofmap_).matrix;
    };
    const TensorCoefficient coefficient = [this](const QuadPoint& q) { return tensor(q.element, q.index); };
    stiffness_ = reduce(assemble_bilinear(dofmap_, Stiffness{coefficient}, options_.quad_degree));
    laplacian_ = reduce(assemble_bilinear(dofmap_, Stiffness{constant_tensor(Mat2::Identity())},
                                          options_.quad_degree));
    drift_ = reduce(assemble_bilinear(dofmap_, Drift{&velocity_, 1.0, options_.drift_form},
                                      options_.quad_degree));
    const Eigen::SparseMatrix<double> pt = dofmap_.prolongation().transpose();
    for (int i = 0; i < 2; ++i) {
      const VectorCoefficient flux = [this, i](const QuadPoint& q) -> Vec2 {
        return -tensor(q.element, q.index).col(i);
      };
      rhs_[i] = pt * assemble_flux_load(dofmap_, flux, options_.quad_degree);
    }
    mean_row_ = pt * basis_integrals(dofmap_);
    stiffness_bordered_ = bordered(stiffness_);
    drift_bordered_ = Eigen::SparseMatrix<double>(drift_);
    drift_bordered_.conservativeResize(drift_.rows() + 1, drift_.cols() + 1);
  }

  CellContext(MeshPtr mesh, DiffusionCase diffusion, const StokesSolution& stokes, CellOptions options = {})
      : CellContext(std::move(mesh), std::move(diffusion), stokes.velocity, options) {}

  const TriMesh& mesh() const { return *mesh_; }
  const MeshPtr& mesh_ptr() const { return mesh_; }
  const DofMap& dofmap() const { return dofmap_; }
  const DiffusionCase& diffusion() const { return diffusion_; }
  const FEField& velocity() const { return velocity_; }
  const CellOptions& options() const { return options_; }
  double theta() const { return diffusion_.theta; }
  double area() const { return area_; }
  double h_max() const { return h_max_; }
  double velocity_max() const { return velocity_max_; }
  int quadrature_points() const { return nq_; }
  const Mat2& tensor(int element, int q) const { return tensors_[element * nq_ + q]; }

  const SparseMatrix& stiffness() const { return stiffness_; }
  const SparseMatrix& laplacian() const { return laplacian_; }
  /// Drift matrix for p = 1; the operator at p is  stiffness + p * drift.
  const SparseMatrix& drift() const { return drift_; }
  const Eigen::VectorXd& rhs(int i) const { return rhs_[i]; }
  const Eigen::VectorXd& mean_row() const { return mean_row_; }

  /// ||D e_i||_{L2(Y)}.
  double de_norm(int i) const { return std::sqrt(de_norm_sq_[i]); }

  /// Element Péclet number |p| ||B||_∞ h / (2θ).
  double peclet(double p) const { return std::abs(p) * velocity_max_ * h_max_ / (2.0 * theta()); }

  /// Bordered operator [K + pN, c^T; c, 0].
  Eigen::SparseMatrix<double> bordered_operator(double p) const {
    Eigen::SparseMatrix<double> out = stiffness_bordered_ + p * drift_bordered_;
    out.makeCompressed();
    return out;
  }

 private:
  Eigen::SparseMatrix<double> bordered(const SparseMatrix& m) const {
    SparseSystem s;
    s.matrix = m;
    s.rhs = Eigen::VectorXd::Zero(m.rows());
    return add_constraint(std::move(s), mean_row_, 0.0).bordered();
  }

  MeshPtr mesh_;
  DiffusionCase diffusion_;
  FEField velocity_;
  CellOptions options_;
  DofMap dofmap_;
  int nq_ = 0;
  std::vector<Mat2> tensors_;
  std::array<double, 2> de_norm_sq_{0.0, 0.0};
  double area_ = 0.0;
  double h_max_ = 0.0;
  double velocity_max_ = 0.0;
  SparseMatrix stiffness_, laplacian_, drift_;
  std::array<Eigen::VectorXd, 2> rhs_;
  Eigen::VectorXd mean_row_;
  Eigen::SparseMatrix<double> stiffness_bordered_, drift_bordered_;
};

/// Correctors (w1, w2) for one drift parameter and the resulting effective tensor.
struct CellSolution {
  double p = 0.0;
  std::array<Eigen::VectorXd, 2> reduced;  // free periodic DOFs
  std::array<FEField, 2> w;
  Mat2 dbar = Mat2::Zero();
  std::array<double, 2> gradient_norm{0.0, 0.0};  // ||∇w_i||_L2
  std::array<double, 2> mean{0.0, 0.0};           // ∫ w_i
  double peclet = 0.0;
  bool peclet_warning = false;
};

struct SymSkewSplit {
  Mat2 A = Mat2::Zero();
  Mat2 J = Mat2::Zero();
};

/// [D̄]_ij = (1/|Y|) ∫ D (e_j + ∇w_j) · e_i.
inline Mat2 dbar_entries(const CellContext& ctx, const std::array<FEField, 2>& w) {
  const TriMesh& m = ctx.mesh();
  const auto& rule = triangle_rule(ctx.options().quad_degree);
  Mat2 out = Mat2::Zero();
  for (int t = 0; t < m.num_triangles(); ++t) {
    const ElementGeometry geo(m, t);
    const Vec2 g[2] = {w[0].gradient(t, rule.points[0], geo), w[1].gradient(t, rule.points[0], geo)};
    for (int q = 0; q < rule.size(); ++q) {
      const double wt = geo.area * rule.weights[q];
      const Mat2& d = ctx.tensor(t, q);
      for (int j = 0; j < 2; ++j) out.col(j) += wt * (d * (Vec2::Unit(j) + g[j]));
    }
  }
  return out / ctx.area();
}

inline Mat2 dbar_entries(const CellSolution& sol, const CellContext& ctx) { return dbar_entries(ctx, sol.w); }

/// A_ij = (1/|Y|) ∫ D(e_j + ∇w_j)·(e_i + ∇w_i) by quadrature, and
/// J_ij = (p/|Y|) n(w_j, w_i) from the assembled drift form.
inline SymSkewSplit sym_skew_split(const CellSolution& sol, const CellContext& ctx) {
  const TriMesh& m = ctx.mesh();
  const auto& rule = triangle_rule(ctx.options().quad_degree);
  SymSkewSplit out;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const ElementGeometry geo(m, t);
    const Vec2 g[2] = {Vec2::Unit(0) + sol.w[0].gradient(t, rule.points[0], geo),
                       Vec2::Unit(1) + sol.w[1].gradient(t, rule.points[0], geo)};
    for (int q = 0; q < rule.size(); ++q) {
      const double wt = geo.area * rule.weights[q];
      const Mat2& d = ctx.tensor(t, q);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) out.A(i, j) += wt * (d * g[j]).dot(g[i]);
    }
  }
  out.A /= ctx.area();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      out.J(i, j) = sol.p / ctx.area() * sol.reduced[i].dot(ctx.drift() * sol.reduced[j]);
  return out;
}

/// ||∇(w_i(p1) - w_i(p2))||_L2.
inline double corrector_gradient_distance(const CellContext& ctx, const CellSolution& a,
                                          const CellSolution& b, int i) {
  const Eigen::VectorXd d = a.reduced[i] - b.reduced[i];
  return std::sqrt(std::max(0.0, d.dot(ctx.laplacian() * d)));
}

/// Solves  ∫ (D∇w_i − pBw_i)·∇ψ = −∫ D e_i·∇ψ  on periodic zero-mean P1 for i = 1, 2 with one
/// factorisation, and checks the discrete energy bound ||∇w_i|| ≤ ||D e_i|| / θ.
inline CellSolution solve_cell(const CellContext& ctx, double p) {
  require(std::isfinite(p), ErrorCode::Precondition, "drift parameter must be finite");
  const int n = ctx.dofmap().free_dof_count();
  const DirectSolver solver(ctx.bordered_operator(p), ctx.options().tolerance);
  CellSolution sol;
  sol.p = p;
  for (int i = 0; i < 2; ++i) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
    b.head(n) = ctx.rhs(i);
    sol.reduced[i] = solver.solve(b).head(n);
    sol.w[i] = ctx.dofmap().make_field(sol.reduced[i]);
    sol.gradient_norm[i] = std::sqrt(std::max(0.0, sol.reduced[i].dot(ctx.laplacian() * sol.reduced[i])));
    sol.mean[i] = ctx.mean_row().dot(sol.reduced[i]);
    const double bound = ctx.de_norm(i) / ctx.theta();
    require(sol.gradient_norm[i] <= bound * (1.0 + ctx.options().energy_slack), ErrorCode::EnergyBoundViolated,
            "corrector energy " + std::to_string(sol.gradient_norm[i]) + " exceeds bound " +
                std::to_string(bound));
  }
  sol.dbar = dbar_entries(ctx, sol.w);
  sol.peclet = ctx.peclet(p);
  sol.peclet_warning = sol.peclet > ctx.options().peclet_limit;
  if (sol.peclet_warning)
    log::warn("Peclet", "element Peclet number " + std::to_string(sol.peclet) + " at p=" + std::to_string(p));
  return sol;
}

}  // namespace twoscale
