#pragma once

#include <iomanip>
#include <memory>
#include <ostream>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "twoscale/error.hpp"

namespace twoscale {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Triplets = std::vector<Eigen::Triplet<double>>;

/// Square system A x = b, optionally bordered by dense constraint rows c_k (Lagrange
/// multipliers):  [A  C^T; C  0] [x; lambda] = [b; g].
struct SparseSystem {
  SparseMatrix matrix;
  Eigen::VectorXd rhs;
  std::vector<Eigen::VectorXd> constraints;
  std::vector<double> constraint_values;
  bool reduced = false;

  int primary_size() const { return static_cast<int>(matrix.rows()); }
  int size() const { return primary_size() + static_cast<int>(constraints.size()); }

  Eigen::SparseMatrix<double> bordered() const {
    const int n = primary_size();
    Triplets entries;
    entries.reserve(matrix.nonZeros() + 2 * n * constraints.size());
    for (int r = 0; r < matrix.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(matrix, r); it; ++it)
        entries.emplace_back(it.row(), it.col(), it.value());
    for (std::size_t k = 0; k < constraints.size(); ++k) {
      const int row = n + static_cast<int>(k);
      for (int j = 0; j < n; ++j) {
        const double c = constraints[k][j];
        if (c == 0.0) continue;
        entries.emplace_back(row, j, c);
        entries.emplace_back(j, row, c);
      }
    }
    Eigen::SparseMatrix<double> out(size(), size());
    out.setFromTriplets(entries.begin(), entries.end());
    return out;
  }

  Eigen::VectorXd bordered_rhs() const {
    Eigen::VectorXd out(size());
    out.head(primary_size()) = rhs;
    for (std::size_t k = 0; k < constraints.size(); ++k)
      out[primary_size() + static_cast<int>(k)] = constraint_values[k];
    return out;
  }
};

inline SparseSystem add_constraint(SparseSystem system, Eigen::VectorXd row, double value = 0.0) {
  require(row.size() == system.primary_size(), ErrorCode::DimensionMismatch,
          "constraint row length differs from system size");
  system.constraints.push_back(std::move(row));
  system.constraint_values.push_back(value);
  return system;
}

/// LU factorisation of a bordered system, reusable for many right-hand sides.
/// Every solve is checked against ||Ax - b|| <= tolerance * ||b||.
class DirectSolver {
 public:
  explicit DirectSolver(const SparseSystem& system, double tolerance = 1e-10)
      : DirectSolver(system.bordered(), tolerance) {}

  explicit DirectSolver(Eigen::SparseMatrix<double> matrix, double tolerance = 1e-10)
      : matrix_(std::move(matrix)), tolerance_(tolerance),
        lu_(std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>>()) {
    require(matrix_.rows() == matrix_.cols(), ErrorCode::DimensionMismatch, "matrix must be square");
    matrix_.makeCompressed();
    lu_->analyzePattern(matrix_);
    lu_->factorize(matrix_);
    require(lu_->info() == Eigen::Success, ErrorCode::SingularMatrix,
            "sparse LU factorisation broke down: " + lu_->lastErrorMessage());
  }

  int size() const { return static_cast<int>(matrix_.rows()); }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    require(b.size() == matrix_.rows(), ErrorCode::DimensionMismatch, "rhs length mismatch");
    Eigen::VectorXd x = lu_->solve(b);
    const double bnorm = b.norm();
    const double scale = bnorm > 0 ? bnorm : 1.0;
    Eigen::VectorXd r = b - matrix_ * x;
    for (int step = 0; step < 3 && r.norm() > 1e-2 * tolerance_ * scale; ++step) {
      x += lu_->solve(r);
      r = b - matrix_ * x;
    }
    const double rel = r.norm() / scale;
    require(std::isfinite(rel), ErrorCode::SingularMatrix, "solution is not finite");
    require(rel <= tolerance_, ErrorCode::ResidualTooLarge,
            "relative residual " + std::to_string(rel) + " exceeds tolerance");
    return x;
  }

 private:
  Eigen::SparseMatrix<double> matrix_;
  double tolerance_;
  std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>> lu_;
};

/// Solves a bordered system; the result holds the primary unknowns followed by multipliers.
inline Eigen::VectorXd solve(const SparseSystem& system, double tolerance = 1e-10) {
  return DirectSolver(system, tolerance).solve(system.bordered_rhs());
}

/// Coordinate text dump, one "row col value" triple per line.
template <class Matrix>
void write_coordinate(std::ostream& out, const Matrix& matrix) {
  out << std::setprecision(17);
  for (int k = 0; k < matrix.outerSize(); ++k)
    for (typename Matrix::InnerIterator it(matrix, k); it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

}  // namespace twoscale
