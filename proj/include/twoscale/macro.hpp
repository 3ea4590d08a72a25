#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>

#include "twoscale/dispersion.hpp"

namespace twoscale {

using SpaceFunction = std::function<double(const Vec2&)>;
using SpaceTimeFunction = std::function<double(double, const Vec2&)>;

/// D*(t_n, x) given the frozen concentration value at that location. For vertex sampling
/// the QuadPoint has element = -1 and index = vertex.
using MacroTensorProvider = std::function<Mat2(int time_index, const QuadPoint& at, double u)>;

/// Where the frozen concentration is sampled to build the tensor.
enum class TensorSampling { QuadraturePoint, ElementAverage, Vertex };

struct MacroProblem {
  MeshPtr mesh;
  double T = 2.0;
  double dt = 0.05;
  SpaceFunction g;
  SpaceTimeFunction f;
  MacroTensorProvider tensor;
  TensorSampling sampling = TensorSampling::QuadraturePoint;
  bool lumped_mass = false;
  int quad_degree = 4;
  double tolerance = 1e-10;

  int steps() const {
    require(dt > 0.0 && T > 0.0, ErrorCode::Precondition, "T and dt must be positive");
    const double ratio = T / dt;
    const long n = std::lround(ratio);
    require(n >= 1 && std::abs(ratio - static_cast<double>(n)) <= 1e-9 * ratio, ErrorCode::Precondition,
            "T must be an integer multiple of dt");
    return static_cast<int>(n);
  }
  double time(int n) const { return n == steps() ? T : n * dt; }
};

inline MacroTensorProvider constant_provider(const Mat2& d) {
  return [d](int, const QuadPoint&, double) { return d; };
}

struct StepDiagnostics {
  double min = 0.0;
  double max = 0.0;
};

struct MacroTrajectory {
  std::vector<double> times;
  std::vector<FEField> fields;
  std::vector<StepDiagnostics> diagnostics;
  double linf_bound = 0.0;      // ||g||_∞ + T ||f||_∞
  int bound_violations = 0;     // steps with ||u||_∞ > 1.05 * bound
  int undershoots = 0;          // steps with min u < -1e-2 ||g||_∞

  int size() const { return static_cast<int>(fields.size()); }
  const FEField& terminal() const { return fields.back(); }
};

/// Implicit Euler for  ∂t u − div(D* ∇u) = f  with u = 0 on ∂Ω and u(0) = g. Mesh-dependent
/// pieces (DOF map, mass matrix) are built once and reused for every step and iteration.
class MacroSolver {
 public:
  explicit MacroSolver(MacroProblem problem)
      : problem_(std::move(problem)),
        all_(problem_.mesh, SpaceKind::ScalarP1),
        interior_(problem_.mesh, SpaceKind::ScalarP1,
                  {false, {EdgeTag::Left, EdgeTag::Right, EdgeTag::Bottom, EdgeTag::Top}}) {
    require(problem_.mesh != nullptr, ErrorCode::Precondition, "macro problem has no mesh");
    require(static_cast<bool>(problem_.g) && static_cast<bool>(problem_.f) && static_cast<bool>(problem_.tensor),
            ErrorCode::Precondition, "macro problem needs g, f and a tensor provider");
    steps_ = problem_.steps();
    mass_full_ = assemble_bilinear(all_, Mass{false}, problem_.quad_degree);
    const SparseMatrix mass_solve =
        problem_.lumped_mass ? assemble_bilinear(all_, Mass{true}, problem_.quad_degree) : mass_full_;
    prolong_ = interior_.prolongation();
    mass_ = SparseMatrix(prolong_.transpose() * mass_solve * prolong_);
    nq_ = triangle_rule(problem_.quad_degree).size();
    initial_ = interpolate(problem_.mesh, 1, problem_.g);
    linf_bound_ = sup_norm_g() + problem_.T * sup_norm_f();
  }

  const MacroProblem& problem() const { return problem_; }
  int steps() const { return steps_; }
  const FEField& initial() const { return initial_; }
  const SparseMatrix& mass() const { return mass_full_; }
  double linf_bound() const { return linf_bound_; }

  /// Tensor at every quadrature point for time index n, built from the frozen field.
  std::vector<Mat2> tensors(int n, const FEField& frozen) const {
    const TriMesh& m = *problem_.mesh;
    const auto& rule = triangle_rule(problem_.quad_degree);
    std::vector<Mat2> out(static_cast<std::size_t>(m.num_triangles()) * nq_);
    if (problem_.sampling == TensorSampling::Vertex) {
      std::vector<Mat2> at_vertex(m.num_vertices());
      for (int v = 0; v < m.num_vertices(); ++v) {
        const QuadPoint qp{-1, v, m.vertices[v], Eigen::Vector3d::Zero()};
        at_vertex[v] = checked(problem_.tensor(n, qp, frozen.coefficients[v]));
      }
      for (int t = 0; t < m.num_triangles(); ++t) {
        const auto& tri = m.triangles[t];
        for (int q = 0; q < nq_; ++q) {
          const auto& l = rule.points[q];
          out[t * nq_ + q] = l[0] * at_vertex[tri[0]] + l[1] * at_vertex[tri[1]] + l[2] * at_vertex[tri[2]];
        }
      }
      return out;
    }
    for (int t = 0; t < m.num_triangles(); ++t) {
      const ElementGeometry geo(m, t);
      if (problem_.sampling == TensorSampling::ElementAverage) {
        const Eigen::Vector3d c = Eigen::Vector3d::Constant(1.0 / 3.0);
        const Mat2 d = checked(problem_.tensor(n, QuadPoint{t, -1, geo.point(c), c}, frozen.value(t, c)));
        for (int q = 0; q < nq_; ++q) out[t * nq_ + q] = d;
        continue;
      }
      for (int q = 0; q < nq_; ++q) {
        const auto& l = rule.points[q];
        out[t * nq_ + q] = checked(problem_.tensor(n, QuadPoint{t, q, geo.point(l), l}, frozen.value(t, l)));
      }
    }
    return out;
  }

  /// u^{n+1} from (M/Δt + A(D^{n+1})) u^{n+1} = M/Δt u^n + F(t^{n+1}).
  FEField step(const FEField& u_n, int n, const FEField& frozen) const {
    const std::vector<Mat2> d = tensors(n + 1, frozen);
    const TensorCoefficient coefficient = [&](const QuadPoint& q) { return d[q.element * nq_ + q.index]; };
    const SparseMatrix stiffness =
        SparseMatrix(prolong_.transpose() * assemble_bilinear(all_, Stiffness{coefficient}, problem_.quad_degree) *
                     prolong_);
    const double inv_dt = 1.0 / problem_.dt;
    const double t_next = problem_.time(n + 1);
    const Eigen::VectorXd load = assemble_load(
        all_, [&](const QuadPoint& q) { return problem_.f(t_next, q.x); }, problem_.quad_degree);
    const Eigen::VectorXd u_free = prolong_.transpose() * u_n.coefficients;
    Eigen::SparseMatrix<double> system = inv_dt * mass_ + stiffness;
    const Eigen::VectorXd rhs = inv_dt * (mass_ * u_free) + prolong_.transpose() * load;
    const DirectSolver solver(system, problem_.tolerance);
    FEField out(problem_.mesh, 1, 1);
    out.coefficients = prolong_ * solver.solve(rhs);
    return out;
  }

  /// Runs all steps; frozen(n + 1, u^n) supplies the field that fixes the tensor at step n + 1.
  template <class Frozen>
  MacroTrajectory solve(Frozen&& frozen) const {
    MacroTrajectory traj;
    traj.linf_bound = linf_bound_;
    traj.times.reserve(steps_ + 1);
    traj.fields.reserve(steps_ + 1);
    traj.times.push_back(0.0);
    traj.fields.push_back(initial_);
    record(traj, initial_);
    for (int n = 0; n < steps_; ++n) {
      const FEField& u_n = traj.fields.back();
      FEField next = step(u_n, n, frozen(n + 1, u_n));
      traj.times.push_back(problem_.time(n + 1));
      traj.fields.push_back(std::move(next));
      record(traj, traj.fields.back());
    }
    if (traj.bound_violations > 0)
      log::warn("LinfBound", std::to_string(traj.bound_violations) + " steps exceed the a-priori bound");
    return traj;
  }

  /// Tensor frozen on a given trajectory (same time index).
  MacroTrajectory solve_frozen_on(const MacroTrajectory& previous) const {
    return solve([&](int n, const FEField&) -> const FEField& { return previous.fields[n]; });
  }

  /// Tensor built from the previous time step of the current run.
  MacroTrajectory solve_time_lagged() const {
    return solve([](int, const FEField& u_n) -> const FEField& { return u_n; });
  }

  /// ||u||_{L2(Ω)} with the consistent mass matrix.
  double l2_norm(const Eigen::VectorXd& coefficients) const {
    return std::sqrt(std::max(0.0, coefficients.dot(mass_full_ * coefficients)));
  }

 private:
  static Mat2 checked(const Mat2& d) {
    require(d.allFinite() && symmetric_min_eigenvalue(d) > 0.0, ErrorCode::NonPositiveTensor,
            "tensor provider returned a tensor with non-positive symmetric part");
    return d;
  }

  void record(MacroTrajectory& traj, const FEField& u) const {
    StepDiagnostics s{u.coefficients.minCoeff(), u.coefficients.maxCoeff()};
    traj.diagnostics.push_back(s);
    if (std::max(std::abs(s.min), std::abs(s.max)) > 1.05 * linf_bound_) ++traj.bound_violations;
    if (s.min < -1e-2 * g_sup_) ++traj.undershoots;
  }

  double sup_norm_g() {
    const TriMesh& m = *problem_.mesh;
    const auto& rule = triangle_rule(problem_.quad_degree);
    double s = 0.0;
    for (const Vec2& v : m.vertices) s = std::max(s, std::abs(problem_.g(v)));
    for (int t = 0; t < m.num_triangles(); ++t) {
      const ElementGeometry geo(m, t);
      for (int q = 0; q < rule.size(); ++q) s = std::max(s, std::abs(problem_.g(geo.point(rule.points[q]))));
    }
    g_sup_ = s;
    return s;
  }

  double sup_norm_f() const {
    const TriMesh& m = *problem_.mesh;
    const auto& rule = triangle_rule(problem_.quad_degree);
    double s = 0.0;
    for (int n = 0; n <= steps_; ++n) {
      const double t = problem_.time(n);
      for (const Vec2& v : m.vertices) s = std::max(s, std::abs(problem_.f(t, v)));
      for (int e = 0; e < m.num_triangles(); ++e) {
        const ElementGeometry geo(m, e);
        for (int q = 0; q < rule.size(); ++q) s = std::max(s, std::abs(problem_.f(t, geo.point(rule.points[q]))));
      }
    }
    return s;
  }

  MacroProblem problem_;
  DofMap all_;
  DofMap interior_;
  int steps_ = 0;
  int nq_ = 0;
  SparseMatrix mass_full_;
  SparseMatrix mass_;
  Eigen::SparseMatrix<double> prolong_;
  FEField initial_;
  double g_sup_ = 0.0;
  double linf_bound_ = 0.0;
};

/// One implicit Euler step with the tensor frozen on `frozen`.
inline FEField step(const MacroProblem& problem, const FEField& u_n, int n, const FEField& frozen) {
  return MacroSolver(problem).step(u_n, n, frozen);
}

/// Full evolution with the tensor lagged by one time step (frozen on u^n for step n + 1).
inline MacroTrajectory solve_trajectory(const MacroProblem& problem) {
  return MacroSolver(problem).solve_time_lagged();
}

/// ||a − b||_{L2(0,T;L2(Ω))} with the trapezoidal rule in time.
inline double trajectory_distance(const MacroSolver& solver, const MacroTrajectory& a, const MacroTrajectory& b) {
  require(a.size() == b.size(), ErrorCode::DimensionMismatch, "trajectories have different lengths");
  double sum = 0.0;
  for (int n = 0; n + 1 < a.size(); ++n) {
    const double dt = a.times[n + 1] - a.times[n];
    const double e0 = solver.l2_norm(a.fields[n].coefficients - b.fields[n].coefficients);
    const double e1 = solver.l2_norm(a.fields[n + 1].coefficients - b.fields[n + 1].coefficients);
    sum += 0.5 * dt * (e0 * e0 + e1 * e1);
  }
  return std::sqrt(sum);
}

namespace detail {

/// Clips a polygon against an axis-aligned rectangle (Sutherland–Hodgman).
inline std::vector<Vec2> clip_to_rect(std::vector<Vec2> poly, const Rect& r) {
  auto clip = [](const std::vector<Vec2>& in, auto inside, auto cross) {
    std::vector<Vec2> out;
    for (std::size_t k = 0; k < in.size(); ++k) {
      const Vec2& a = in[k];
      const Vec2& b = in[(k + 1) % in.size()];
      const bool ia = inside(a), ib = inside(b);
      if (ia) out.push_back(a);
      if (ia != ib) out.push_back(cross(a, b));
    }
    return out;
  };
  auto at_x = [](double x) {
    return [x](const Vec2& a, const Vec2& b) {
      const double s = (x - a.x()) / (b.x() - a.x());
      return Vec2(x, a.y() + s * (b.y() - a.y()));
    };
  };
  auto at_y = [](double y) {
    return [y](const Vec2& a, const Vec2& b) {
      const double s = (y - a.y()) / (b.y() - a.y());
      return Vec2(a.x() + s * (b.x() - a.x()), y);
    };
  };
  poly = clip(poly, [&](const Vec2& p) { return p.x() >= r.x0; }, at_x(r.x0));
  if (poly.empty()) return poly;
  poly = clip(poly, [&](const Vec2& p) { return p.x() <= r.x1; }, at_x(r.x1));
  if (poly.empty()) return poly;
  poly = clip(poly, [&](const Vec2& p) { return p.y() >= r.y0; }, at_y(r.y0));
  if (poly.empty()) return poly;
  return clip(poly, [&](const Vec2& p) { return p.y() <= r.y1; }, at_y(r.y1));
}

}  // namespace detail

/// ∫_R u for a P1 field, exact: each triangle is clipped to R and the linear integrand is
/// integrated over the clipped polygon by a centroid fan.
inline double integrate_over_rect(const FEField& u, const Rect& r) {
  const TriMesh& m = *u.mesh;
  require(u.degree == 1 && u.components == 1, ErrorCode::DimensionMismatch, "expects a scalar P1 field");
  require(r.x0 < r.x1 && r.y0 < r.y1, ErrorCode::SubdomainMisaligned, "empty subdomain");
  const double tol = 1e-12 * std::max(m.box.width(), m.box.height());
  require(r.x0 >= m.box.x0 - tol && r.x1 <= m.box.x1 + tol && r.y0 >= m.box.y0 - tol && r.y1 <= m.box.y1 + tol,
          ErrorCode::SubdomainMisaligned, "subdomain is not contained in the domain");
  double sum = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const ElementGeometry geo(m, t);
    double lo_x = geo.corners[0].x(), hi_x = lo_x, lo_y = geo.corners[0].y(), hi_y = lo_y;
    for (const Vec2& c : geo.corners) {
      lo_x = std::min(lo_x, c.x());
      hi_x = std::max(hi_x, c.x());
      lo_y = std::min(lo_y, c.y());
      hi_y = std::max(hi_y, c.y());
    }
    if (hi_x <= r.x0 || lo_x >= r.x1 || hi_y <= r.y0 || lo_y >= r.y1) continue;
    const double nodal[3] = {u.coefficients[m.triangles[t][0]], u.coefficients[m.triangles[t][1]],
                             u.coefficients[m.triangles[t][2]]};
    const Vec2 centroid = (geo.corners[0] + geo.corners[1] + geo.corners[2]) / 3.0;
    auto value = [&](const Vec2& x) {
      double v = 0.0;
      for (int k = 0; k < 3; ++k) v += nodal[k] * (1.0 / 3.0 + geo.grad_lambda[k].dot(x - centroid));
      return v;
    };
    if (lo_x >= r.x0 && hi_x <= r.x1 && lo_y >= r.y0 && hi_y <= r.y1) {
      sum += geo.area * (nodal[0] + nodal[1] + nodal[2]) / 3.0;
      continue;
    }
    const auto poly = detail::clip_to_rect({geo.corners[0], geo.corners[1], geo.corners[2]}, r);
    for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
      const Vec2 &a = poly[0], &b = poly[k], &c = poly[k + 1];
      const double area = 0.5 * std::abs((b - a).x() * (c - a).y() - (b - a).y() * (c - a).x());
      sum += area * value((a + b + c) / 3.0);
    }
  }
  return sum;
}

/// M(t_n) = ∫_R u(t_n) for every stored time.
inline std::vector<double> mass_indicator(const MacroTrajectory& traj, const Rect& subdomain) {
  std::vector<double> out;
  out.reserve(traj.fields.size());
  for (const auto& u : traj.fields) out.push_back(integrate_over_rect(u, subdomain));
  return out;
}

inline void write_mass_csv(std::ostream& out, const std::vector<double>& times, const std::vector<double>& mass) {
  out << std::setprecision(12) << "t,M\n";
  for (std::size_t k = 0; k < times.size(); ++k) out << times[k] << ',' << mass[k] << '\n';
}

}  // namespace twoscale
