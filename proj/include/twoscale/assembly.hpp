#pragma once

#include <functional>
#include <variant>

#include "twoscale/dofmap.hpp"
#include "twoscale/linear_system.hpp"

namespace twoscale {

/// Location handed to coefficient callbacks during assembly.
struct QuadPoint {
  int element = 0;
  int index = 0;
  Vec2 x = Vec2::Zero();
  Eigen::Vector3d bary = Eigen::Vector3d::Zero();
};

using TensorCoefficient = std::function<Mat2(const QuadPoint&)>;
using ScalarCoefficient = std::function<double(const QuadPoint&)>;
using VectorCoefficient = std::function<Vec2(const QuadPoint&)>;

/// How the drift term  -p ∫ (B w)·∇ψ  is discretised. The skew form averages it with its
/// adjoint; both agree for pointwise divergence-free B, but only the skew form keeps
/// w ↦ ∫(Bw)·∇w identically zero when B is divergence-free only against P1 (Taylor–Hood).
enum class DriftForm { Conservative, SkewSymmetric };

struct Stiffness {
  TensorCoefficient D;
};
struct Mass {
  bool lumped = false;
};
struct Drift {
  const FEField* velocity = nullptr;
  double p = 1.0;
  DriftForm form = DriftForm::SkewSymmetric;
};
using BilinearForm = std::variant<Stiffness, Mass, Drift>;

inline TensorCoefficient constant_tensor(const Mat2& d) {
  return [d](const QuadPoint&) { return d; };
}

namespace detail {

inline void require_scalar(const DofMap& dofmap) {
  require(dofmap.components() == 1, ErrorCode::DimensionMismatch,
          "scalar form assembled on a vector space");
}

}  // namespace detail

/// Assembles a scalar bilinear form over all (unreduced) DOFs; row = test, column = trial.
inline SparseMatrix assemble_bilinear(const DofMap& dofmap, const BilinearForm& form,
                                      int quad_degree = 4) {
  detail::require_scalar(dofmap);
  const TriMesh& mesh = dofmap.mesh();
  const int nloc = nodes_per_element(dofmap.degree());
  const auto& rule = triangle_rule(quad_degree);

  if (const auto* drift = std::get_if<Drift>(&form)) {
    require(drift->velocity != nullptr && drift->velocity->components == 2, ErrorCode::DimensionMismatch,
            "drift needs a two-component velocity field");
    require(drift->velocity->mesh.get() == &mesh ||
                drift->velocity->mesh->num_triangles() == mesh.num_triangles(),
            ErrorCode::DimensionMismatch, "velocity lives on a different mesh");
  }

  Triplets entries;
  entries.reserve(static_cast<std::size_t>(mesh.num_triangles()) * nloc * nloc);
  Eigen::MatrixXd local(nloc, nloc);
  double phi[6];
  Vec2 grad[6];
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const ElementGeometry geo(mesh, t);
    local.setZero();
    for (int q = 0; q < rule.size(); ++q) {
      const auto& l = rule.points[q];
      const double w = geo.area * rule.weights[q];
      shape_values(dofmap.degree(), l, phi);
      shape_gradients(dofmap.degree(), l, geo, grad);
      const QuadPoint qp{t, q, geo.point(l), l};
      std::visit(
          [&](const auto& f) {
            using Form = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<Form, Stiffness>) {
              const Mat2 d = f.D(qp);
              for (int j = 0; j < nloc; ++j) {
                const Vec2 flux = d * grad[j];
                for (int i = 0; i < nloc; ++i) local(i, j) += w * flux.dot(grad[i]);
              }
            } else if constexpr (std::is_same_v<Form, Mass>) {
              for (int j = 0; j < nloc; ++j)
                for (int i = 0; i < nloc; ++i) local(i, j) += w * phi[i] * phi[j];
            } else {
              const Vec2 b = f.velocity->vector_value(t, l);
              for (int j = 0; j < nloc; ++j) {
                for (int i = 0; i < nloc; ++i) {
                  const double conservative = -f.p * phi[j] * b.dot(grad[i]);
                  if (f.form == DriftForm::Conservative) {
                    local(i, j) += w * conservative;
                  } else {
                    const double adjoint = -f.p * phi[i] * b.dot(grad[j]);
                    local(i, j) += 0.5 * w * (conservative - adjoint);
                  }
                }
              }
            }
          },
          form);
    }
    if (const auto* mass = std::get_if<Mass>(&form); mass && mass->lumped) {
      for (int i = 0; i < nloc; ++i) {
        const double row = local.row(i).sum();
        local.row(i).setZero();
        local(i, i) = row;
      }
    }
    const auto nodes = dofmap.element_nodes(t);
    for (int i = 0; i < nloc; ++i)
      for (int j = 0; j < nloc; ++j)
        if (local(i, j) != 0.0) entries.emplace_back(nodes[i], nodes[j], local(i, j));
  }
  SparseMatrix out(dofmap.num_dofs(), dofmap.num_dofs());
  out.setFromTriplets(entries.begin(), entries.end());
  return out;
}

/// Load vector  ∫ f ψ_i.
inline Eigen::VectorXd assemble_load(const DofMap& dofmap, const ScalarCoefficient& f,
                                     int quad_degree = 4) {
  detail::require_scalar(dofmap);
  const TriMesh& mesh = dofmap.mesh();
  const int nloc = nodes_per_element(dofmap.degree());
  const auto& rule = triangle_rule(quad_degree);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dofmap.num_dofs());
  double phi[6];
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const ElementGeometry geo(mesh, t);
    const auto nodes = dofmap.element_nodes(t);
    for (int q = 0; q < rule.size(); ++q) {
      const auto& l = rule.points[q];
      shape_values(dofmap.degree(), l, phi);
      const double fw = f(QuadPoint{t, q, geo.point(l), l}) * geo.area * rule.weights[q];
      for (int i = 0; i < nloc; ++i) out[nodes[i]] += fw * phi[i];
    }
  }
  return out;
}

/// Flux load vector  ∫ v·∇ψ_i.
inline Eigen::VectorXd assemble_flux_load(const DofMap& dofmap, const VectorCoefficient& v,
                                          int quad_degree = 4) {
  detail::require_scalar(dofmap);
  const TriMesh& mesh = dofmap.mesh();
  const int nloc = nodes_per_element(dofmap.degree());
  const auto& rule = triangle_rule(quad_degree);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(dofmap.num_dofs());
  Vec2 grad[6];
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const ElementGeometry geo(mesh, t);
    const auto nodes = dofmap.element_nodes(t);
    for (int q = 0; q < rule.size(); ++q) {
      const auto& l = rule.points[q];
      shape_gradients(dofmap.degree(), l, geo, grad);
      const Vec2 vw = v(QuadPoint{t, q, geo.point(l), l}) * (geo.area * rule.weights[q]);
      for (int i = 0; i < nloc; ++i) out[nodes[i]] += vw.dot(grad[i]);
    }
  }
  return out;
}

/// ∫ φ_j for every (unreduced) scalar basis function.
inline Eigen::VectorXd basis_integrals(const DofMap& dofmap) {
  return assemble_load(dofmap, [](const QuadPoint&) { return 1.0; });
}

inline SparseSystem make_system(SparseMatrix matrix, Eigen::VectorXd rhs) {
  require(matrix.rows() == matrix.cols() && matrix.rows() == rhs.size(), ErrorCode::DimensionMismatch,
          "system matrix and rhs sizes disagree");
  SparseSystem s;
  s.matrix = std::move(matrix);
  s.rhs = std::move(rhs);
  return s;
}

/// Folds a system assembled on all DOFs onto the free DOFs of `dofmap`: periodic slave
/// rows and columns are added into their masters and Dirichlet rows/columns are dropped
/// (P^T A P, P^T b). A system that is already reduced is returned unchanged.
inline SparseSystem apply_periodic(SparseSystem system, const DofMap& dofmap) {
  if (system.reduced) return system;
  require(system.primary_size() == dofmap.num_dofs(), ErrorCode::DimensionMismatch,
          "system size differs from the DOF map");
  require(system.constraints.empty(), ErrorCode::Precondition,
          "reduce before attaching constraint rows");
  const Eigen::SparseMatrix<double> p = dofmap.prolongation();
  const Eigen::SparseMatrix<double> pt = p.transpose();
  SparseMatrix reduced = SparseMatrix(pt * system.matrix * p);
  reduced.prune(0.0);
  system.matrix = std::move(reduced);
  system.rhs = pt * system.rhs;
  system.reduced = true;
  return system;
}

/// Borders a reduced scalar system with the row ∫ φ_j so its solution has zero mean.
inline SparseSystem attach_zero_mean(SparseSystem system, const DofMap& dofmap) {
  require(system.constraints.empty(), ErrorCode::DoubleConstraint, "mean constraint already attached");
  Eigen::VectorXd row = basis_integrals(dofmap);
  if (system.reduced) row = dofmap.prolongation().transpose() * row;
  return add_constraint(std::move(system), std::move(row), 0.0);
}

}  // namespace twoscale
