#pragma once

#include <array>
#include <iomanip>
#include <memory>
#include <ostream>
#include <type_traits>

#include <Eigen/Dense>

#include "twoscale/mesh.hpp"
#include "twoscale/quadrature.hpp"

namespace twoscale {

using MeshPtr = std::shared_ptr<const TriMesh>;

/// Affine map data of one triangle.
struct ElementGeometry {
  std::array<Vec2, 3> corners;
  std::array<Vec2, 3> grad_lambda;
  double area = 0.0;

  ElementGeometry(const TriMesh& mesh, int t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) corners[k] = mesh.vertices[tri[k]];
    area = mesh.signed_area(t);
    for (int k = 0; k < 3; ++k) {
      const Vec2& a = corners[(k + 1) % 3];
      const Vec2& b = corners[(k + 2) % 3];
      grad_lambda[k] = Vec2(a.y() - b.y(), b.x() - a.x()) / (2.0 * area);
    }
  }

  Vec2 point(const Eigen::Vector3d& bary) const {
    return bary[0] * corners[0] + bary[1] * corners[1] + bary[2] * corners[2];
  }
};

/// Nodal Lagrange basis on a triangle: degree 1 (vertices) or 2 (vertices, then the
/// midpoints of the edges opposite vertices 0, 1, 2).
inline int nodes_per_element(int degree) { return degree == 1 ? 3 : 6; }

inline void shape_values(int degree, const Eigen::Vector3d& l, double* out) {
  if (degree == 1) {
    for (int k = 0; k < 3; ++k) out[k] = l[k];
    return;
  }
  for (int k = 0; k < 3; ++k) out[k] = l[k] * (2.0 * l[k] - 1.0);
  for (int k = 0; k < 3; ++k) out[3 + k] = 4.0 * l[(k + 1) % 3] * l[(k + 2) % 3];
}

inline void shape_gradients(int degree, const Eigen::Vector3d& l, const ElementGeometry& geo,
                            Vec2* out) {
  const auto& g = geo.grad_lambda;
  if (degree == 1) {
    for (int k = 0; k < 3; ++k) out[k] = g[k];
    return;
  }
  for (int k = 0; k < 3; ++k) out[k] = (4.0 * l[k] - 1.0) * g[k];
  for (int k = 0; k < 3; ++k) {
    const int i = (k + 1) % 3, j = (k + 2) % 3;
    out[3 + k] = 4.0 * (l[i] * g[j] + l[j] * g[i]);
  }
}

inline int lagrange_node_count(const TriMesh& mesh, int degree) {
  return degree == 1 ? mesh.num_vertices() : mesh.num_vertices() + mesh.num_edges();
}

inline std::array<int, 6> lagrange_element_nodes(const TriMesh& mesh, int degree, int t) {
  std::array<int, 6> nodes{};
  for (int k = 0; k < 3; ++k) nodes[k] = mesh.triangles[t][k];
  if (degree == 2)
    for (int k = 0; k < 3; ++k) nodes[3 + k] = mesh.num_vertices() + mesh.triangle_edges[t][k];
  return nodes;
}

inline Vec2 lagrange_node_position(const TriMesh& mesh, int degree, int node) {
  if (degree == 1 || node < mesh.num_vertices()) return mesh.vertices[node];
  const auto& e = mesh.edges[node - mesh.num_vertices()];
  return 0.5 * (mesh.vertices[e[0]] + mesh.vertices[e[1]]);
}

/// Scalar or vector Lagrange field; coefficients are stored component-major over the
/// unconstrained nodes, so periodic partners carry equal values.
struct FEField {
  MeshPtr mesh;
  int degree = 1;
  int components = 1;
  Eigen::VectorXd coefficients;

  FEField() = default;
  FEField(MeshPtr m, int deg, int comps)
      : mesh(std::move(m)), degree(deg), components(comps),
        coefficients(Eigen::VectorXd::Zero(comps * lagrange_node_count(*mesh, deg))) {}

  int num_nodes() const { return lagrange_node_count(*mesh, degree); }

  double nodal(int component, int node) const { return coefficients[component * num_nodes() + node]; }

  double value(int t, const Eigen::Vector3d& bary, int component = 0) const {
    double phi[6];
    shape_values(degree, bary, phi);
    const auto nodes = lagrange_element_nodes(*mesh, degree, t);
    double v = 0.0;
    for (int a = 0; a < nodes_per_element(degree); ++a) v += phi[a] * nodal(component, nodes[a]);
    return v;
  }

  Vec2 vector_value(int t, const Eigen::Vector3d& bary) const {
    return {value(t, bary, 0), value(t, bary, 1)};
  }

  Vec2 gradient(int t, const Eigen::Vector3d& bary, const ElementGeometry& geo,
                int component = 0) const {
    Vec2 grads[6];
    shape_gradients(degree, bary, geo, grads);
    const auto nodes = lagrange_element_nodes(*mesh, degree, t);
    Vec2 g = Vec2::Zero();
    for (int a = 0; a < nodes_per_element(degree); ++a) g += grads[a] * nodal(component, nodes[a]);
    return g;
  }

  double max_abs_nodal_vector() const {
    double best = 0.0;
    for (int n = 0; n < num_nodes(); ++n) {
      double s = 0.0;
      for (int c = 0; c < components; ++c) s += nodal(c, n) * nodal(c, n);
      best = std::max(best, std::sqrt(s));
    }
    return best;
  }
};

/// Nodal interpolant of f into the given Lagrange space.
template <class F>
FEField interpolate(MeshPtr mesh, int degree, F&& f) {
  using Result = decltype(f(Vec2{}));
  constexpr int comps = std::is_same_v<std::decay_t<Result>, double> ? 1 : 2;
  FEField field(std::move(mesh), degree, comps);
  const int nn = field.num_nodes();
  for (int n = 0; n < nn; ++n) {
    const Vec2 x = lagrange_node_position(*field.mesh, degree, n);
    if constexpr (comps == 1) {
      field.coefficients[n] = f(x);
    } else {
      const Vec2 v = f(x);
      field.coefficients[n] = v.x();
      field.coefficients[nn + n] = v.y();
    }
  }
  return field;
}

/// Integrates `integrand(t, bary, geometry, weight)` over the mesh; weight includes the area.
template <class F>
double integrate(const TriMesh& mesh, int degree, F&& integrand) {
  const auto& rule = triangle_rule(degree);
  double sum = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const ElementGeometry geo(mesh, t);
    for (int q = 0; q < rule.size(); ++q)
      sum += integrand(t, rule.points[q], geo, geo.area * rule.weights[q]);
  }
  return sum;
}

/// Text grid export: one line per mesh vertex with its index, coordinates and values.
inline void write_vertex_field(std::ostream& out, const FEField& field) {
  out << std::setprecision(12);
  for (int v = 0; v < field.mesh->num_vertices(); ++v) {
    const Vec2& x = field.mesh->vertices[v];
    out << v << ' ' << x.x() << ' ' << x.y();
    for (int c = 0; c < field.components; ++c) out << ' ' << field.nodal(c, v);
    out << '\n';
  }
}

}  // namespace twoscale
