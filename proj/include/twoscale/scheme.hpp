#pragma once

#include <chrono>
#include <map>
#include <mutex>
#include <set>
#include <unordered_map>

#include "twoscale/macro.hpp"

namespace twoscale {

/// Outer iteration: the full trajectory u^k freezes the tensors of iterate k+1
/// (TrajectoryFixedPoint), or each sweep lags the tensor by one time step within itself
/// (TimeLaggedSweep).
enum class IterationMode { TrajectoryFixedPoint, TimeLaggedSweep };

/// Whether D̄(p) comes from an interpolated table or from a cell solve at the exact p.
enum class DispersionMode { Table, DirectPerNode };

inline std::string to_string(IterationMode m) {
  return m == IterationMode::TrajectoryFixedPoint ? "TrajectoryFixedPoint" : "TimeLaggedSweep";
}
inline std::string to_string(DispersionMode m) { return m == DispersionMode::Table ? "Table" : "DirectPerNode"; }

struct IterationConfig {
  double tol = 1e-7;
  int max_iter = 20;
  IterationMode mode = IterationMode::TrajectoryFixedPoint;
  DispersionMode dispersion = DispersionMode::Table;
  IndexConvention convention = IndexConvention::Column;
  bool check_fixed_point = false;
  int threads = 1;

  void validate() const {
    require(tol > 0.0, ErrorCode::ConfigInvalid, "iteration.tol must be positive");
    require(max_iter >= 1, ErrorCode::ConfigInvalid, "iteration.max_iter must be at least 1");
  }
};

/// D̄(p) lookup shared by all tensor evaluations of a run: either table interpolation with
/// clamping or memoized cell solves. Thread-safe.
class DispersionSource {
 public:
  static DispersionSource table(const DispersionTable& t) {
    t.validate();
    DispersionSource s;
    s.table_ = &t;
    return s;
  }

  static DispersionSource direct(const CellContext& ctx, int threads = 1) {
    DispersionSource s;
    s.context_ = &ctx;
    s.threads_ = threads;
    return s;
  }

  DispersionMode mode() const { return table_ ? DispersionMode::Table : DispersionMode::DirectPerNode; }

  Mat2 operator()(double p) const {
    if (table_) return interp(*table_, p, &state_->clamps);
    {
      std::lock_guard lock(state_->mutex);
      const auto it = state_->memo.find(p);
      if (it != state_->memo.end()) return it->second;
    }
    const Mat2 d = solve_cell(*context_, p).dbar;
    std::lock_guard lock(state_->mutex);
    ++state_->solves;
    state_->memo.emplace(p, d);
    return d;
  }

  /// Solves every p not yet memoized, in parallel (no-op for tables).
  void prefetch(const std::vector<double>& ps) const {
    if (table_) return;
    std::vector<double> missing;
    {
      std::lock_guard lock(state_->mutex);
      std::set<double> seen;
      for (double p : ps)
        if (!state_->memo.count(p) && seen.insert(p).second) missing.push_back(p);
    }
    parallel_for(static_cast<int>(missing.size()), threads_, [&](int k) { (*this)(missing[k]); });
  }

  long clamps() const { return state_->clamps.count.load(); }
  long solves() const {
    std::lock_guard lock(state_->mutex);
    return state_->solves;
  }

 private:
  struct State {
    ClampCounter clamps;
    std::mutex mutex;
    std::unordered_map<double, Mat2> memo;
    long solves = 0;
  };

  DispersionSource() : state_(std::make_shared<State>()) {}

  const DispersionTable* table_ = nullptr;
  const CellContext* context_ = nullptr;
  int threads_ = 1;
  std::shared_ptr<State> state_;
};

/// D*(u) assembled from D̄ at p_j = G_j(u) following the index convention.
inline Mat2 dstar_at(const DispersionSource& source, const Nonlinearity& g1, const Nonlinearity& g2, double u,
                     IndexConvention convention) {
  const double p1 = g1(u), p2 = g2(u);
  const Mat2 t1 = source(p1);
  const Mat2 t2 = p2 == p1 ? t1 : source(p2);
  Mat2 out;
  if (convention == IndexConvention::Column) {
    out.col(0) = t1.col(0);
    out.col(1) = t2.col(1);
  } else {
    out.row(0) = t1.row(0);
    out.row(1) = t2.row(1);
  }
  return out;
}

struct IterationReport {
  std::vector<double> errors;         // e_k = ||u^{k} − u^{k−1}||_{L2(0,T;L2)}
  std::vector<double> wall_times;     // seconds per iteration
  int iterations = 0;
  bool converged = false;
  long clamp_warnings = 0;
  long cell_solves = 0;
  int bound_violations = 0;           // steps over all iterates exceeding the L∞ bound (+5%)
  double fixed_point_residual = -1.0; // set when check_fixed_point is on
  std::map<std::string, double> phase_seconds;

  void write_csv(std::ostream& out) const {
    out << std::setprecision(12) << "iteration,e_k,wall_time\n";
    for (std::size_t k = 0; k < errors.size(); ++k) out << k + 1 << ',' << errors[k] << ',' << wall_times[k] << '\n';
  }
};

struct IterationResult {
  MacroTrajectory trajectory;
  IterationReport report;
};

namespace detail {

/// Every p value the tensor evaluation of step n will request, for prefetching cell solves.
inline std::vector<double> requested_parameters(const MacroSolver& solver, const FEField& frozen,
                                                const Nonlinearity& g1, const Nonlinearity& g2) {
  std::vector<double> ps;
  auto add = [&](double u) {
    ps.push_back(g1(u));
    ps.push_back(g2(u));
  };
  const TriMesh& m = *solver.problem().mesh;
  switch (solver.problem().sampling) {
    case TensorSampling::Vertex:
      for (int v = 0; v < m.num_vertices(); ++v) add(frozen.coefficients[v]);
      break;
    case TensorSampling::ElementAverage:
      for (int t = 0; t < m.num_triangles(); ++t) add(frozen.value(t, Eigen::Vector3d::Constant(1.0 / 3.0)));
      break;
    case TensorSampling::QuadraturePoint: {
      const auto& rule = triangle_rule(solver.problem().quad_degree);
      for (int t = 0; t < m.num_triangles(); ++t)
        for (int q = 0; q < rule.size(); ++q) add(frozen.value(t, rule.points[q]));
      break;
    }
  }
  return ps;
}

}  // namespace detail

/// Fixed-point iteration coupling the cell problems and the macro evolution, starting from
/// u^0(t) = g. Hitting max_iter is reported through the flag, not thrown.
inline IterationResult iterate(MacroProblem problem, const DispersionSource& source, const Nonlinearity& g1,
                               const Nonlinearity& g2, const IterationConfig& cfg) {
  using clock = std::chrono::steady_clock;
  cfg.validate();
  const auto start = clock::now();
  const IndexConvention convention = cfg.convention;
  problem.tensor = [&source, &g1, &g2, convention](int, const QuadPoint&, double u) {
    return dstar_at(source, g1, g2, u, convention);
  };
  const MacroSolver solver(std::move(problem));
  auto prefetching = [&](auto frozen_of) {
    return [&, frozen_of](int n, const FEField& u_n) -> const FEField& {
      const FEField& frozen = frozen_of(n, u_n);
      if (source.mode() == DispersionMode::DirectPerNode)
        source.prefetch(detail::requested_parameters(solver, frozen, g1, g2));
      return frozen;
    };
  };

  IterationResult out;
  IterationReport& report = out.report;
  MacroTrajectory previous;
  previous.times.push_back(0.0);
  for (int n = 0; n <= solver.steps(); ++n) {
    if (n > 0) previous.times.push_back(solver.problem().time(n));
    previous.fields.push_back(solver.initial());
  }
  report.phase_seconds["setup"] = std::chrono::duration<double>(clock::now() - start).count();

  for (int k = 1; k <= cfg.max_iter; ++k) {
    const auto t0 = clock::now();
    MacroTrajectory next =
        cfg.mode == IterationMode::TrajectoryFixedPoint
            ? solver.solve(prefetching([&](int n, const FEField&) -> const FEField& { return previous.fields[n]; }))
            : solver.solve(prefetching([](int, const FEField& u_n) -> const FEField& { return u_n; }));
    const double e = trajectory_distance(solver, next, previous);
    report.errors.push_back(e);
    report.wall_times.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    report.bound_violations += next.bound_violations;
    report.iterations = k;
    log::info("iteration " + std::to_string(k) + " e_k=" + std::to_string(e));
    previous = std::move(next);
    if (e < cfg.tol) {
      report.converged = true;
      break;
    }
  }
  report.phase_seconds["iterate"] = std::chrono::duration<double>(clock::now() - start).count() -
                                    report.phase_seconds["setup"];
  if (!report.converged)
    log::warn("NotConverged", "no convergence after " + std::to_string(cfg.max_iter) + " iterations (e_k = " +
                                  std::to_string(report.errors.back()) + ")");
  if (cfg.check_fixed_point) {
    const MacroTrajectory again = solver.solve(
        prefetching([&](int n, const FEField&) -> const FEField& { return previous.fields[n]; }));
    report.fixed_point_residual = trajectory_distance(solver, again, previous);
  }
  report.clamp_warnings = source.clamps();
  report.cell_solves = source.solves();
  out.trajectory = std::move(previous);
  return out;
}

/// Terminal-field L2 differences between the four mode combinations.
struct ModeComparison {
  double table_vs_direct = 0.0;       // TrajectoryFixedPoint runs
  double table_vs_direct_lagged = 0.0;
  double fixed_point_vs_lagged = 0.0; // Table runs
  double fixed_point_vs_lagged_direct = 0.0;
  std::map<std::string, IterationReport> reports;

  double max_difference() const {
    return std::max({table_vs_direct, table_vs_direct_lagged, fixed_point_vs_lagged, fixed_point_vs_lagged_direct});
  }
};

/// Runs {Table, DirectPerNode} × {TrajectoryFixedPoint, TimeLaggedSweep} on one problem.
inline ModeComparison cross_validate_modes(const MacroProblem& problem, const DispersionTable& table,
                                           const CellContext& ctx, const Nonlinearity& g1, const Nonlinearity& g2,
                                           IterationConfig cfg) {
  ModeComparison out;
  std::map<std::string, FEField> terminal;
  for (const DispersionMode d : {DispersionMode::Table, DispersionMode::DirectPerNode}) {
    const DispersionSource source =
        d == DispersionMode::Table ? DispersionSource::table(table) : DispersionSource::direct(ctx, cfg.threads);
    for (const IterationMode m : {IterationMode::TrajectoryFixedPoint, IterationMode::TimeLaggedSweep}) {
      cfg.mode = m;
      cfg.dispersion = d;
      const std::string key = to_string(d) + "/" + to_string(m);
      auto result = iterate(problem, source, g1, g2, cfg);
      terminal.emplace(key, result.trajectory.terminal());
      out.reports.emplace(key, std::move(result.report));
    }
  }
  MacroProblem plain = problem;
  plain.tensor = constant_provider(Mat2::Identity());
  const MacroSolver solver(std::move(plain));
  auto diff = [&](const std::string& a, const std::string& b) {
    return solver.l2_norm(terminal.at(a).coefficients - terminal.at(b).coefficients);
  };
  out.table_vs_direct = diff("Table/TrajectoryFixedPoint", "DirectPerNode/TrajectoryFixedPoint");
  out.table_vs_direct_lagged = diff("Table/TimeLaggedSweep", "DirectPerNode/TimeLaggedSweep");
  out.fixed_point_vs_lagged = diff("Table/TrajectoryFixedPoint", "Table/TimeLaggedSweep");
  out.fixed_point_vs_lagged_direct = diff("DirectPerNode/TrajectoryFixedPoint", "DirectPerNode/TimeLaggedSweep");
  return out;
}

}  // namespace twoscale
