#pragma once

#include <map>
#include <numeric>
#include <vector>

#include <Eigen/Sparse>

#include "twoscale/fe_space.hpp"

namespace twoscale {

enum class SpaceKind { ScalarP1, ScalarP2, VectorP2, ScalarP1Pressure };

inline int space_degree(SpaceKind kind) {
  return (kind == SpaceKind::ScalarP2 || kind == SpaceKind::VectorP2) ? 2 : 1;
}
inline int space_components(SpaceKind kind) { return kind == SpaceKind::VectorP2 ? 2 : 1; }

struct DofConstraints {
  bool periodic = false;
  std::vector<EdgeTag> dirichlet;  // homogeneous values on nodes of these edges
};

/// Global numbering of a Lagrange space plus its reduction to free DOFs: periodic slave
/// nodes map to their master, Dirichlet nodes are dropped. Immutable once built.
class DofMap {
 public:
  DofMap(MeshPtr mesh, SpaceKind kind, const DofConstraints& constraints = {})
      : mesh_(std::move(mesh)), kind_(kind), degree_(space_degree(kind)),
        components_(space_components(kind)), constraints_(constraints) {
    num_nodes_ = lagrange_node_count(*mesh_, degree_);
    master_.resize(num_nodes_);
    std::iota(master_.begin(), master_.end(), 0);
    if (constraints.periodic) identify_periodic();
    build_free_numbering();
  }

  const TriMesh& mesh() const { return *mesh_; }
  const MeshPtr& mesh_ptr() const { return mesh_; }
  SpaceKind kind() const { return kind_; }
  int degree() const { return degree_; }
  int components() const { return components_; }
  int num_nodes() const { return num_nodes_; }
  int num_dofs() const { return components_ * num_nodes_; }
  int free_dof_count() const { return components_ * free_nodes_; }
  int free_nodes() const { return free_nodes_; }
  bool periodic() const { return periodic_active_; }
  const DofConstraints& constraints() const { return constraints_; }

  int dof(int component, int node) const { return component * num_nodes_ + node; }

  /// Master node of a (possibly slave) node.
  int master(int node) const { return master_[node]; }

  /// Free index of a global DOF, or -1 when the DOF is Dirichlet-constrained.
  int free_index(int global_dof) const {
    const int comp = global_dof / num_nodes_;
    const int node = global_dof % num_nodes_;
    const int f = node_free_[master_[node]];
    return f < 0 ? -1 : comp * free_nodes_ + f;
  }

  std::array<int, 6> element_nodes(int t) const { return lagrange_element_nodes(*mesh_, degree_, t); }

  /// P with full = P * free; its transpose folds slave rows into masters.
  Eigen::SparseMatrix<double> prolongation() const {
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(num_dofs());
    for (int d = 0; d < num_dofs(); ++d) {
      const int f = free_index(d);
      if (f >= 0) entries.emplace_back(d, f, 1.0);
    }
    Eigen::SparseMatrix<double> p(num_dofs(), free_dof_count());
    p.setFromTriplets(entries.begin(), entries.end());
    return p;
  }

  /// Expands a free-DOF vector to all nodes (Dirichlet nodes get zero).
  Eigen::VectorXd expand(const Eigen::VectorXd& free_values) const {
    require(free_values.size() >= free_dof_count(), ErrorCode::DimensionMismatch,
            "free vector too short to expand");
    Eigen::VectorXd full = Eigen::VectorXd::Zero(num_dofs());
    for (int d = 0; d < num_dofs(); ++d) {
      const int f = free_index(d);
      if (f >= 0) full[d] = free_values[f];
    }
    return full;
  }

  FEField make_field(const Eigen::VectorXd& free_values) const {
    FEField field(mesh_, degree_, components_);
    field.coefficients = expand(free_values);
    return field;
  }

 private:
  int find(int n) {
    while (master_[n] != n) n = master_[n] = master_[master_[n]];
    return n;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    master_[b] = a;
  }

  void identify_periodic() {
    const TriMesh& m = *mesh_;
    if (m.periodic_pairs.empty()) return;
    // Every Left/Bottom vertex must have a partner.
    for (EdgeTag tag : {EdgeTag::Left, EdgeTag::Bottom}) {
      for (int v : m.vertices_with_tag(tag)) {
        const bool paired = std::any_of(m.periodic_pairs.begin(), m.periodic_pairs.end(),
                                        [&](const auto& pr) { return pr.first == v; });
        require(paired, ErrorCode::MissingPairs,
                "boundary vertex " + std::to_string(v) + " has no periodic partner");
      }
    }
    periodic_active_ = true;
    for (const auto& [a, b] : m.periodic_pairs) unite(a, b);
    if (degree_ == 2) {
      std::map<std::pair<int, int>, int> edge_index;
      for (int e = 0; e < m.num_edges(); ++e) edge_index[{m.edges[e][0], m.edges[e][1]}] = e;
      std::map<int, std::vector<int>> partners;
      for (const auto& [a, b] : m.periodic_pairs) partners[a].push_back(b);
      for (EdgeTag tag : {EdgeTag::Left, EdgeTag::Bottom}) {
        for (int e : m.edges_with_tag(tag)) {
          const Vec2 shift = tag == EdgeTag::Left ? Vec2(m.box.width(), 0.0) : Vec2(0.0, m.box.height());
          int found = -1;
          for (int pa : partners[m.edges[e][0]]) {
            for (int pb : partners[m.edges[e][1]]) {
              if ((m.vertices[pa] - m.vertices[m.edges[e][0]] - shift).norm() > 1e-12) continue;
              if ((m.vertices[pb] - m.vertices[m.edges[e][1]] - shift).norm() > 1e-12) continue;
              auto it = edge_index.find({std::min(pa, pb), std::max(pa, pb)});
              if (it != edge_index.end()) found = it->second;
            }
          }
          require(found >= 0, ErrorCode::MissingPairs, "periodic edge has no partner edge");
          unite(m.num_vertices() + e, m.num_vertices() + found);
        }
      }
    }
    for (int n = 0; n < num_nodes_; ++n) master_[n] = find(n);
  }

  void build_free_numbering() {
    std::vector<bool> fixed(num_nodes_, false);
    const TriMesh& m = *mesh_;
    for (EdgeTag tag : constraints_.dirichlet) {
      for (int e : m.edges_with_tag(tag)) {
        fixed[master_[m.edges[e][0]]] = true;
        fixed[master_[m.edges[e][1]]] = true;
        if (degree_ == 2) fixed[master_[m.num_vertices() + e]] = true;
      }
    }
    node_free_.assign(num_nodes_, -1);
    free_nodes_ = 0;
    for (int n = 0; n < num_nodes_; ++n)
      if (master_[n] == n && !fixed[n]) node_free_[n] = free_nodes_++;
  }

  MeshPtr mesh_;
  SpaceKind kind_;
  int degree_;
  int components_;
  DofConstraints constraints_;
  int num_nodes_ = 0;
  int free_nodes_ = 0;
  bool periodic_active_ = false;
  std::vector<int> master_;
  std::vector<int> node_free_;
};

}  // namespace twoscale
