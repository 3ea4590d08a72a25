#pragma once

#include <cmath>
#include <functional>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "twoscale/error.hpp"
#include "twoscale/mesh.hpp"

namespace twoscale {

/// Obstacle-free cell data for the finite-difference reference: diagonal D = diag(d1, d2)
/// and a periodic, divergence-free velocity B.
struct FdCellData {
  std::function<double(const Vec2&)> d1;
  std::function<double(const Vec2&)> d2;
  std::function<Vec2(const Vec2&)> B;
};

/// B = amplitude (sin 2πy2, sin 2πy1).
inline std::function<Vec2(const Vec2&)> shear_velocity(double amplitude = 1.0) {
  return [amplitude](const Vec2& y) {
    constexpr double pi = std::numbers::pi;
    return Vec2(amplitude * std::sin(2 * pi * y.y()), amplitude * std::sin(2 * pi * y.x()));
  };
}

/// D̄(p) on the periodic unit cell from second-order finite differences on an n×n node grid:
///   −div(D∇w_i) + p B·∇w_i = div(D e_i),  mean(w_i) = 0,
/// with flux-form diffusion (D at half points), centred drift, and
///   D̄_ij = mean over x_i-faces of d_i (δ_ij + ∂_i w_j).
inline Mat2 fd_cell_oracle(const FdCellData& data, double p, int n) {
  require(n >= 4, ErrorCode::Precondition, "finite-difference grid needs n >= 4");
  const double h = 1.0 / n;
  const int N = n * n;
  auto id = [n](int i, int j) { return ((i % n + n) % n) + n * ((j % n + n) % n); };
  auto at = [h](double i, double j) { return Vec2(i * h, j * h); };

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(8 * N);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(N + 1, 2);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int c = id(i, j);
      const double de = data.d1(at(i + 0.5, j)), dw = data.d1(at(i - 0.5, j));
      const double dn = data.d2(at(i, j + 0.5)), ds = data.d2(at(i, j - 0.5));
      const Vec2 b = p * data.B(at(i, j));
      trip.emplace_back(c, c, (de + dw + dn + ds) / (h * h));
      trip.emplace_back(c, id(i + 1, j), -de / (h * h) + b.x() / (2 * h));
      trip.emplace_back(c, id(i - 1, j), -dw / (h * h) - b.x() / (2 * h));
      trip.emplace_back(c, id(i, j + 1), -dn / (h * h) + b.y() / (2 * h));
      trip.emplace_back(c, id(i, j - 1), -ds / (h * h) - b.y() / (2 * h));
      trip.emplace_back(c, N, 1.0);
      trip.emplace_back(N, c, 1.0);
      rhs(c, 0) = (de - dw) / h;
      rhs(c, 1) = (dn - ds) / h;
    }
  }
  Eigen::SparseMatrix<double> A(N + 1, N + 1);
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu(A);
  require(lu.info() == Eigen::Success, ErrorCode::SingularMatrix, "finite-difference cell system is singular");
  const Eigen::MatrixXd w = lu.solve(rhs);

  Mat2 dbar = Mat2::Zero();
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const double de = data.d1(at(i + 0.5, j));
      const double dn = data.d2(at(i, j + 0.5));
      for (int col = 0; col < 2; ++col) {
        dbar(0, col) += de * ((col == 0 ? 1.0 : 0.0) + (w(id(i + 1, j), col) - w(id(i, j), col)) / h);
        dbar(1, col) += dn * ((col == 1 ? 1.0 : 0.0) + (w(id(i, j + 1), col) - w(id(i, j), col)) / h);
      }
    }
  }
  return dbar / N;
}

}  // namespace twoscale
