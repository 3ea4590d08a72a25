#pragma once

#include <chrono>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "twoscale/fd_oracle.hpp"
#include "twoscale/pipeline.hpp"

namespace twoscale {

/// Outcome of one check: computed vs reference values under an explicit tolerance.
struct OracleResult {
  std::string name;
  std::vector<double> computed;
  std::vector<double> reference;
  double tolerance = 0.0;
  bool passed = false;
  double seconds = 0.0;
  std::string detail;
};

// ---------------------------------------------------------------------------------------------
// Macro oracles

struct HeatOracleResult {
  MacroTrajectory trajectory;
  double relative_error = 0.0;  // ||u_h(T) − u(T)||_L2 / ||u(T)||_L2 against the nodal interpolant
};

/// D* = I, f = 0, g = sin(πx1) sin(πx2/2) on (0,1)×(0,2); exact u = e^{−(π² + π²/4)t} g.
inline HeatOracleResult heat_oracle(int n, double dt, double T, double amplitude = 1.0) {
  constexpr double pi = std::numbers::pi;
  MacroProblem pb;
  pb.mesh = std::make_shared<const TriMesh>(build_macro_mesh(Rect{0, 0, 1, 2}, n + 1, 2 * n + 1));
  pb.T = T;
  pb.dt = dt;
  pb.g = [amplitude](const Vec2& x) { return amplitude * std::sin(pi * x.x()) * std::sin(pi * x.y() / 2); };
  pb.f = [](double, const Vec2&) { return 0.0; };
  pb.tensor = constant_provider(Mat2::Identity());
  const MacroSolver solver(pb);
  HeatOracleResult out;
  out.trajectory = solver.solve_time_lagged();
  const Eigen::VectorXd exact = std::exp(-1.25 * pi * pi * T) * solver.initial().coefficients;
  const double norm = solver.l2_norm(exact);
  out.relative_error = norm > 0 ? solver.l2_norm(out.trajectory.terminal().coefficients - exact) / norm
                                : solver.l2_norm(out.trajectory.terminal().coefficients);
  return out;
}

/// L2 error of the steady problem −Δu = f, u = sin(πx1) sin(πx2/2) on (0,1)×(0,2), solved by
/// one implicit Euler step with a huge Δt from u = 0 (grid (n+1)×(2n+1)).
inline double elliptic_oracle_error(int n) {
  constexpr double pi = std::numbers::pi;
  auto exact = [](const Vec2& x) { return std::sin(pi * x.x()) * std::sin(pi * x.y() / 2); };
  MacroProblem pb;
  pb.mesh = std::make_shared<const TriMesh>(build_macro_mesh(Rect{0, 0, 1, 2}, n + 1, 2 * n + 1));
  pb.T = 1e12;
  pb.dt = 1e12;
  pb.g = [](const Vec2&) { return 0.0; };
  pb.f = [&](double, const Vec2& x) { return 1.25 * pi * pi * exact(x); };
  pb.tensor = constant_provider(Mat2::Identity());
  const FEField u = MacroSolver(pb).solve_time_lagged().terminal();
  const double e2 = integrate(*pb.mesh, 5, [&](int t, const Eigen::Vector3d& l, const ElementGeometry& g, double w) {
    const double d = u.value(t, l) - exact(g.point(l));
    return w * d * d;
  });
  return std::sqrt(e2);
}

/// Reference macro scenario (Gaussian bump and ball source of the given strength) on an n×n grid.
inline MacroProblem source_problem(int n, double dt, double source = 1000.0, double T = 2.0) {
  MacroProblem pb;
  pb.mesh = std::make_shared<const TriMesh>(build_macro_mesh(Rect{0, 0, 1, 2}, n, n));
  pb.T = T;
  pb.dt = dt;
  const Vec2 c(0.5, 0.5);
  pb.g = [c](const Vec2& x) {
    const double r2 = (x - c).squaredNorm();
    return r2 <= 0.0625 ? std::exp(-10.0 * r2) : 0.0;
  };
  pb.f = [c, source](double, const Vec2& x) { return (x - c).squaredNorm() <= 0.0625 ? source : 0.0; };
  return pb;
}

/// ∫ u over the closed ball B_r(c), by quadrature.
inline double ball_integral(const FEField& u, const Vec2& c, double r) {
  return integrate(*u.mesh, 5, [&](int t, const Eigen::Vector3d& l, const ElementGeometry& g, double w) {
    return (g.point(l) - c).squaredNorm() <= r * r ? w * u.value(t, l) : 0.0;
  });
}

// ---------------------------------------------------------------------------------------------
// Acceptance suite

struct VerifyOptions {
  double cell_h = 0.025;
  int threads = 1;
  int sweep_n = 101;
  double p_range = 10.0;
  int fd_grid = 128;
  std::uint32_t seed = 20240521u;
};

/// Runs the acceptance checks, sharing cell setups and sweeps between them.
class AcceptanceSuite {
 public:
  explicit AcceptanceSuite(VerifyOptions options = {}) : options_(options) {}

  static std::vector<std::string> names() {
    return {"trivial_homogenization", "fd_oracle_equivalence", "positivity_and_energy_bounds",
            "skew_structure",         "fast_diffusion_shape",  "slow_diffusion_shape",
            "macro_heat_oracle",      "full_pipeline",         "nonlinearity_effect",
            "mode_cross_validation"};
  }

  OracleResult run(const std::string& name) {
    const auto start = std::chrono::steady_clock::now();
    OracleResult r;
    r.name = name;
    try {
      if (name == "trivial_homogenization") r = trivial_homogenization();
      else if (name == "fd_oracle_equivalence") r = fd_oracle_equivalence();
      else if (name == "positivity_and_energy_bounds") r = positivity_and_energy_bounds();
      else if (name == "skew_structure") r = skew_structure();
      else if (name == "fast_diffusion_shape") r = fast_diffusion_shape();
      else if (name == "slow_diffusion_shape") r = slow_diffusion_shape();
      else if (name == "macro_heat_oracle") r = macro_heat_oracle();
      else if (name == "full_pipeline") r = full_pipeline();
      else if (name == "nonlinearity_effect") r = nonlinearity_effect();
      else if (name == "mode_cross_validation") r = mode_cross_validation();
      else throw Error(ErrorCode::Precondition, "unknown check '" + name + "'");
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("error: ") + e.what();
    }
    r.name = name;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  }

  std::vector<OracleResult> run_all() {
    std::vector<OracleResult> out;
    for (const auto& n : names()) out.push_back(run(n));
    return out;
  }

  // 1. Obstacle-free cell with D = cI: zero correctors and D̄ = cI for any p.
  OracleResult trivial_homogenization() {
    const double c = 1.7;
    OracleResult r;
    r.tolerance = 1e-10;
    const MeshPtr mesh = cell_mesh_for(Geometry::full());
    const StokesSolution& stokes = stokes_for(Geometry::full(), mesh);
    const CellContext ctx(mesh, constant_diffusion(c, c), stokes);
    double grad = 0.0, dev = 0.0;
    for (double p : {-10.0, 0.0, 7.3}) {
      const CellSolution s = solve_cell(ctx, p);
      grad = std::max({grad, s.gradient_norm[0], s.gradient_norm[1]});
      dev = std::max(dev, (s.dbar - c * Mat2::Identity()).cwiseAbs().maxCoeff());
    }
    r.computed = {grad, dev};
    r.reference = {0.0, 0.0};
    r.passed = grad <= r.tolerance && dev <= r.tolerance;
    r.detail = "max ||grad w_i|| = " + fmt(grad) + ", max |Dbar - cI| = " + fmt(dev) +
               ", |B|_max = " + fmt(stokes.diagnostics.velocity_max);
    return r;
  }

  // 2. FEM vs finite differences on the obstacle-free cell with an analytic velocity.
  OracleResult fd_oracle_equivalence() {
    OracleResult r;
    r.tolerance = 5e-3;
    constexpr double pi = std::numbers::pi;
    const MeshPtr mesh = cell_mesh_for(Geometry::full());
    const FEField velocity = interpolate(mesh, 2, shear_velocity());
    // Constant D = diag(2, 3), then a smooth periodic diagonal D with non-zero correctors.
    const FdCellData constant{[](const Vec2&) { return 2.0; }, [](const Vec2&) { return 3.0; }, shear_velocity()};
    const FdCellData varying{
        [](const Vec2& y) { return 2.0 + 0.5 * std::sin(2 * pi * y.x()) * std::cos(2 * pi * y.y()); },
        [](const Vec2& y) { return 3.0 + 0.5 * std::cos(2 * pi * y.x()) + 0.3 * std::sin(2 * pi * y.y()); },
        shear_velocity()};
    double worst = 0.0;
    std::ostringstream detail;
    for (const FdCellData* data : {&constant, &varying}) {
      const DiffusionCase dc{"fd", [data](const Vec2& y) {
                               Mat2 d = Mat2::Zero();
                               d(0, 0) = data->d1(y);
                               d(1, 1) = data->d2(y);
                               return d;
                             },
                             1.2};
      const CellContext ctx(mesh, dc, velocity);
      for (double p : {0.0, 3.0, -7.0}) {
        const Mat2 fem = solve_cell(ctx, p).dbar;
        const Mat2 fd = fd_cell_oracle(*data, p, options_.fd_grid);
        const double scale = fd.cwiseAbs().maxCoeff();
        const double rel = (fem - fd).cwiseAbs().maxCoeff() / scale;
        worst = std::max(worst, rel);
        r.computed.push_back(fem(0, 0));
        r.computed.push_back(fem(1, 1));
        r.reference.push_back(fd(0, 0));
        r.reference.push_back(fd(1, 1));
        detail << (data == &constant ? "const" : "var") << " p=" << p << " rel=" << fmt(rel) << "; ";
      }
    }
    r.passed = worst <= r.tolerance;
    r.detail = detail.str() + "max entrywise deviation relative to max|entry| = " + fmt(worst);
    return r;
  }

  // 3. Positive symmetric part and corrector energy bound over the full sweep.
  OracleResult positivity_and_energy_bounds() {
    OracleResult r;
    r.tolerance = 1e-2;
    double min_eig = std::numeric_limits<double>::infinity();
    double worst_ratio = 0.0;
    std::ostringstream detail;
    for (const auto& geometry : {std::string("disk"), std::string("two_rects")}) {
      for (const auto& diffusion : {std::string("fast"), std::string("slow")}) {
        const auto& sweep = standard_sweep(geometry, diffusion);
        const CellContext& ctx = *context(geometry, diffusion);
        double e = std::numeric_limits<double>::infinity(), ratio = 0.0;
        for (const auto& s : sweep) {
          e = std::min(e, symmetric_min_eigenvalue(s.dbar));
          for (int i = 0; i < 2; ++i) ratio = std::max(ratio, s.gradient_norm[i] * ctx.theta() / ctx.de_norm(i));
        }
        min_eig = std::min(min_eig, e);
        worst_ratio = std::max(worst_ratio, ratio);
        detail << geometry << '/' << diffusion << ": min eig " << fmt(e) << ", max energy ratio " << fmt(ratio)
               << "; ";
      }
    }
    r.computed = {min_eig, worst_ratio};
    r.reference = {0.0, 1.0};
    r.passed = min_eig > 0.0 && worst_ratio <= 1.0 + r.tolerance;
    r.detail = detail.str();
    return r;
  }

  // 4. J has zero diagonal and is antisymmetric; A + J reproduces D̄.
  OracleResult skew_structure() {
    OracleResult r;
    r.tolerance = 1e-10;
    std::mt19937 rng(options_.seed);
    std::uniform_real_distribution<double> dist(-options_.p_range, options_.p_range);
    double diag = 0.0, anti = 0.0, split = 0.0;
    for (const auto& geometry : {std::string("disk"), std::string("two_rects")}) {
      const CellContext& ctx = *context(geometry, "fast");
      for (int k = 0; k < 10; ++k) {
        const CellSolution s = solve_cell(ctx, dist(rng));
        const SymSkewSplit ss = sym_skew_split(s, ctx);
        diag = std::max({diag, std::abs(ss.J(0, 0)), std::abs(ss.J(1, 1))});
        anti = std::max(anti, std::abs(ss.J(0, 1) + ss.J(1, 0)));
        split = std::max(split, (ss.A + ss.J - s.dbar).norm());
      }
    }
    r.computed = {diag, anti, split};
    r.reference = {0.0, 0.0, 0.0};
    r.passed = diag <= 1e-10 && anti <= 1e-10 && split <= 1e-8;
    r.detail = "20 random p: max |J_ii| = " + fmt(diag) + ", max |J12 + J21| = " + fmt(anti) +
               ", max ||A + J - Dbar||_F = " + fmt(split) + " (tolerance 1e-8)";
    return r;
  }

  // 5. Shape of p ↦ D̄(p) for the fast diffusion case.
  OracleResult fast_diffusion_shape() {
    OracleResult r;
    r.tolerance = 2e-2;
    std::ostringstream detail;
    bool ok = true;
    double worst_parity = 0.0;
    for (const auto& geometry : {std::string("disk"), std::string("two_rects")}) {
      const auto& sweep = standard_sweep(geometry, "fast");
      const Parity par = parity(sweep);
      worst_parity = std::max({worst_parity, par.even, par.odd});
      const bool min_at_zero = par.argmin11 == par.zero_index && par.argmin22 == par.zero_index;
      ok = ok && par.even <= r.tolerance && par.odd <= r.tolerance && min_at_zero;
      detail << geometry << ": even dev " << fmt(par.even) << ", odd dev " << fmt(par.odd) << ", min at p=0 "
             << (min_at_zero ? "yes" : "no") << "; ";
    }
    const auto& g2 = standard_sweep("two_rects", "fast");
    double ratio = std::numeric_limits<double>::infinity();
    std::vector<double> d11, d22;
    for (const auto& s : g2) {
      ratio = std::min(ratio, s.dbar(0, 0) / s.dbar(1, 1));
      d11.push_back(s.dbar(0, 0));
      d22.push_back(s.dbar(1, 1));
    }
    const double var11 = variation(d11), var22 = variation(d22);
    ok = ok && ratio > 1.5 && var11 < 0.1 && var22 > 0.3;
    r.computed = {worst_parity, ratio, var11, var22};
    r.reference = {0.02, 1.5, 0.1, 0.3};
    r.passed = ok;
    r.detail = detail.str() + "two_rects: min D11/D22 = " + fmt(ratio) + " (> 1.5), D11 variation " + fmt(var11) +
               " (< 0.1), D22 variation " + fmt(var22) + " (> 0.3)";
    return r;
  }

  // 6. Slow diffusion: large D22 variation and a smooth profile near p = 0.
  OracleResult slow_diffusion_shape() {
    OracleResult r;
    r.tolerance = 1.0;
    const auto& sweep = standard_sweep("two_rects", "slow");
    std::vector<double> d22;
    for (const auto& s : sweep) d22.push_back(s.dbar(1, 1));
    const double var22 = variation(d22);

    // Second difference quotients on spacing 0.02 and 0.04 over [-0.5, 0.5]: a kink at p = 0
    // would make the fine quotient grow like 1/spacing.
    const CellContext& ctx = *context("two_rects", "slow");
    const auto fine_nodes = sweep_nodes(-0.5, 0.5, 51);
    const auto fine = solve_sweep(ctx, fine_nodes, options_.threads);
    auto quotients = [&](int stride) {
      std::vector<double> q;
      const double hp = 0.02 * stride;
      for (std::size_t k = stride; k + stride < fine.size(); k += stride)
        q.push_back((fine[k + stride].dbar(1, 1) - 2 * fine[k].dbar(1, 1) + fine[k - stride].dbar(1, 1)) / (hp * hp));
      return q;
    };
    const auto q1 = quotients(1), q2 = quotients(2);
    // An even profile with a minimum at 0 that saturates has exactly two inflections; more
    // sign changes mean oscillation, a sign change next to p = 0 means a kink.
    bool finite = true;
    int sign_changes = 0;
    double max1 = 0.0, max2 = 0.0;
    for (std::size_t k = 0; k < q1.size(); ++k) {
      finite = finite && std::isfinite(q1[k]);
      if (k > 0 && (q1[k] > 0) != (q1[k - 1] > 0)) ++sign_changes;
      max1 = std::max(max1, std::abs(q1[k]));
    }
    for (double q : q2) max2 = std::max(max2, std::abs(q));
    const std::size_t mid = q1.size() / 2;
    const bool convex_core = q1[mid] > 0 && q1[mid - 1] > 0 && q1[mid + 1] > 0;
    const double growth = max1 / max2;
    r.computed = {var22, growth, static_cast<double>(sign_changes)};
    r.reference = {1.0, 1.5, 2.0};
    r.passed = var22 >= 1.0 && finite && convex_core && sign_changes <= 2 && growth < 1.5;
    r.detail = "two_rects slow: D22 variation " + fmt(var22) + " (>= 1.0); fine-sweep second differences finite: " +
               (finite ? "yes" : "no") + ", convex at p = 0, +-0.02: " + (convex_core ? "yes" : "no") +
               ", sign changes " + std::to_string(sign_changes) + " (<= 2), max|d2| at spacing 0.02 / at 0.04 = " +
               fmt(growth) + " (< 1.5)";
    return r;
  }

  // 7. Heat-mode decay, implicit Euler order 1, spatial order 2.
  OracleResult macro_heat_oracle() {
    OracleResult r;
    r.tolerance = 1e-2;
    const double err = heat_oracle(50, 1e-3, 0.1).relative_error;
    std::vector<FEField> terminal;
    for (double dt : {0.02, 0.01, 0.005, 0.0025}) terminal.push_back(heat_oracle(20, dt, 0.1).trajectory.terminal());
    MacroProblem pb;
    pb.mesh = terminal[0].mesh;
    pb.g = [](const Vec2&) { return 0.0; };
    pb.f = [](double, const Vec2&) { return 0.0; };
    pb.tensor = constant_provider(Mat2::Identity());
    pb.T = pb.dt = 1.0;
    const MacroSolver norms(pb);
    std::vector<double> diffs, time_orders, space_orders, errors;
    for (int k = 0; k + 1 < 4; ++k) diffs.push_back(norms.l2_norm(terminal[k].coefficients - terminal[k + 1].coefficients));
    for (int k = 0; k + 1 < 3; ++k) time_orders.push_back(std::log2(diffs[k] / diffs[k + 1]));
    for (int n : {10, 20, 40}) errors.push_back(elliptic_oracle_error(n));
    for (int k = 0; k + 1 < 3; ++k) space_orders.push_back(std::log2(errors[k] / errors[k + 1]));
    bool ok = err < 1e-2;
    for (double o : time_orders) ok = ok && std::abs(o - 1.0) <= 0.3;
    for (double o : space_orders) ok = ok && std::abs(o - 2.0) <= 0.3;
    r.computed = {err, time_orders[0], time_orders[1], space_orders[0], space_orders[1]};
    r.reference = {0.0, 1.0, 1.0, 2.0, 2.0};
    r.passed = ok;
    r.detail = "mode decay rel. L2 error " + fmt(err) + " (< 1e-2); time orders " + fmt(time_orders[0]) + ", " +
               fmt(time_orders[1]) + " (1 +- 0.3); space orders " + fmt(space_orders[0]) + ", " +
               fmt(space_orders[1]) + " (2 +- 0.3)";
    return r;
  }

  // 8. Reduced reference scenario with G(u) = 1 - 2u on both geometries.
  OracleResult full_pipeline() {
    OracleResult r;
    r.tolerance = 1e-7;
    const auto& disk = pipeline_run("disk", Nonlinearity::tasep());
    const auto& rects = pipeline_run("two_rects", Nonlinearity::tasep());
    bool ordered = true;
    double margin = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < disk.mass.size(); ++k) {
      ordered = ordered && disk.mass[k] >= rects.mass[k];
      margin = std::min(margin, disk.mass[k] - rects.mass[k]);
    }
    auto linf = [](const MacroTrajectory& t) {
      double m = 0.0;
      for (const auto& f : t.fields) m = std::max(m, f.coefficients.cwiseAbs().maxCoeff());
      return m;
    };
    const double bound = disk.result.trajectory.linf_bound;
    const double u_max = std::max(linf(disk.result.trajectory), linf(rects.result.trajectory));
    const bool converged = disk.result.report.converged && rects.result.report.converged;
    const bool bounded = u_max <= 1.05 * bound && disk.result.report.bound_violations == 0 &&
                         rects.result.report.bound_violations == 0;
    r.computed = {static_cast<double>(disk.result.report.iterations),
                  static_cast<double>(rects.result.report.iterations), disk.result.report.errors.back(),
                  rects.result.report.errors.back(), u_max, margin};
    r.reference = {20, 20, 1e-7, 1e-7, 1.05 * bound, 0.0};
    r.passed = converged && bounded && ordered;
    r.detail = "iterations disk/two_rects = " + std::to_string(disk.result.report.iterations) + "/" +
               std::to_string(rects.result.report.iterations) + ", final e_k " +
               fmt(disk.result.report.errors.back()) + "/" + fmt(rects.result.report.errors.back()) +
               ", max|u| = " + fmt(u_max) + " vs bound " + fmt(bound) + ", min_t (M_disk - M_two_rects) = " +
               fmt(margin) + ", M(2) = " + fmt(disk.mass.back()) + "/" + fmt(rects.mass.back());
    return r;
  }

  // 9. G̃(u) = 1/(1e-4 + |1 - 2u|) vs G(u) = 1 - 2u on geometry 2.
  OracleResult nonlinearity_effect() {
    OracleResult r;
    r.tolerance = 1e-3;
    const auto& lin = pipeline_run("two_rects", Nonlinearity::tasep());
    const auto& rec = pipeline_run("two_rects", Nonlinearity::reciprocal_abs(1e-4));
    double mass_diff = 0.0, mass_scale = 0.0;
    for (std::size_t k = 0; k < lin.mass.size(); ++k) {
      mass_diff = std::max(mass_diff, std::abs(lin.mass[k] - rec.mass[k]));
      mass_scale = std::max(mass_scale, std::abs(lin.mass[k]));
    }
    const Vec2 c(0.5, 0.5);
    const double ball_lin = ball_integral(lin.result.trajectory.terminal(), c, 0.25);
    const double ball_rec = ball_integral(rec.result.trajectory.terminal(), c, 0.25);
    const long clamps = rec.result.report.clamp_warnings;
    r.computed = {mass_diff / mass_scale, ball_rec, static_cast<double>(clamps)};
    r.reference = {r.tolerance, ball_lin, 0.0};
    r.passed = mass_diff > r.tolerance * mass_scale && ball_rec > ball_lin && clamps > 0 &&
               lin.result.report.converged && rec.result.report.converged;
    r.detail = "max_t |M_G~ - M_G| / max M = " + fmt(mass_diff / mass_scale) + ", ball integral G~ " +
               fmt(ball_rec) + " vs G " + fmt(ball_lin) + ", clamp warnings G~/G = " + std::to_string(clamps) + "/" +
               std::to_string(lin.result.report.clamp_warnings);
    return r;
  }

  // 10. Table vs direct dispersion, and the degenerate constant-G case across all modes.
  OracleResult mode_cross_validation() {
    OracleResult r;
    r.tolerance = 1e-3;
    const CellContext& ctx = *context("two_rects", "fast");
    const DispersionTable& table = standard_table("two_rects", "fast");
    MacroProblem pb = source_problem(10, 0.1, 50.0);
    pb.sampling = TensorSampling::Vertex;
    IterationConfig cfg;
    cfg.threads = options_.threads;
    const ModeComparison nonlinear = cross_validate_modes(pb, table, ctx, Nonlinearity::tasep(),
                                                          Nonlinearity::tasep(), cfg);
    // A constant equal to a table node, so interpolation is exact.
    const ModeComparison constant = cross_validate_modes(pb, table, ctx, Nonlinearity::constant(1.0),
                                                         Nonlinearity::constant(1.0), cfg);
    int max_iterations = 0;
    for (const auto& [key, rep] : constant.reports) max_iterations = std::max(max_iterations, rep.iterations);
    const double agree = constant.max_difference();
    r.computed = {nonlinear.table_vs_direct, static_cast<double>(max_iterations), agree};
    r.reference = {1e-3, 2, 1e-9};
    r.passed = nonlinear.table_vs_direct <= 1e-3 && max_iterations <= 2 && agree <= 1e-9;
    r.detail = "G = 1-2u: table vs direct " + fmt(nonlinear.table_vs_direct) + " (<= 1e-3), fixed point vs lagged " +
               fmt(nonlinear.fixed_point_vs_lagged) + "; G = 1: iterations <= " + std::to_string(max_iterations) +
               ", max mode difference " + fmt(agree) + " (<= 1e-9)";
    return r;
  }

  /// 101-node sweep on [−10, 10] (cached).
  const std::vector<CellSolution>& standard_sweep(const std::string& geometry, const std::string& diffusion) {
    const std::string key = geometry + "/" + diffusion;
    auto it = sweeps_.find(key);
    if (it == sweeps_.end()) {
      const auto nodes = sweep_nodes(-options_.p_range, options_.p_range, options_.sweep_n);
      it = sweeps_.emplace(key, solve_sweep(*context(geometry, diffusion), nodes, options_.threads)).first;
    }
    return it->second;
  }

  const DispersionTable& standard_table(const std::string& geometry, const std::string& diffusion) {
    const std::string key = geometry + "/" + diffusion;
    auto it = tables_.find(key);
    if (it == tables_.end())
      it = tables_.emplace(key, table_from(standard_sweep(geometry, diffusion), geometry, diffusion, options_.cell_h))
               .first;
    return it->second;
  }

  std::shared_ptr<const CellContext> context(const std::string& geometry, const std::string& diffusion) {
    const std::string key = geometry + "/" + diffusion;
    auto it = contexts_.find(key);
    if (it == contexts_.end()) {
      const Geometry g = Scenario::parse_geometry(geometry);
      auto mesh = cell_mesh_for(g);
      auto ctx = std::make_shared<const CellContext>(mesh, diffusion == "fast" ? fast_diffusion() : slow_diffusion(),
                                                     stokes_for(g, mesh));
      it = contexts_.emplace(key, std::move(ctx)).first;
    }
    return it->second;
  }

 private:
  struct Parity {
    double even = 0.0;
    double odd = 0.0;
    int argmin11 = -1;
    int argmin22 = -1;
    int zero_index = -1;
  };

  struct PipelineRun {
    IterationResult result;
    std::vector<double> mass;
  };

  static std::string fmt(double x) {
    std::ostringstream o;
    o << std::setprecision(4) << x;
    return o.str();
  }

  /// (max − min) / min.
  static double variation(const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return (*hi - *lo) / *lo;
  }

  /// Deviation from evenness of the diagonal and oddness of the off-diagonal, each relative to
  /// the largest magnitude of that entry over the sweep (nodes symmetric about p = 0).
  static Parity parity(const std::vector<CellSolution>& sweep) {
    Parity out;
    const int n = static_cast<int>(sweep.size());
    double scale_diag = 0.0, scale_off = 0.0;
    for (const auto& s : sweep) {
      scale_diag = std::max({scale_diag, std::abs(s.dbar(0, 0)), std::abs(s.dbar(1, 1))});
      scale_off = std::max({scale_off, std::abs(s.dbar(0, 1)), std::abs(s.dbar(1, 0))});
    }
    for (int k = 0; k < n; ++k) {
      const Mat2& a = sweep[k].dbar;
      const Mat2& b = sweep[n - 1 - k].dbar;
      out.even = std::max({out.even, std::abs(a(0, 0) - b(0, 0)) / scale_diag, std::abs(a(1, 1) - b(1, 1)) / scale_diag});
      if (scale_off > 1e-12 * scale_diag)
        out.odd = std::max({out.odd, std::abs(a(0, 1) + b(0, 1)) / scale_off, std::abs(a(1, 0) + b(1, 0)) / scale_off});
      if (std::abs(sweep[k].p) < 1e-12) out.zero_index = k;
      if (out.argmin11 < 0 || a(0, 0) < sweep[out.argmin11].dbar(0, 0)) out.argmin11 = k;
      if (out.argmin22 < 0 || a(1, 1) < sweep[out.argmin22].dbar(1, 1)) out.argmin22 = k;
    }
    return out;
  }

  MeshPtr cell_mesh_for(const Geometry& g) {
    auto it = meshes_.find(g.label());
    if (it == meshes_.end())
      it = meshes_.emplace(g.label(), std::make_shared<const TriMesh>(build_cell_mesh(g, options_.cell_h))).first;
    return it->second;
  }

  const StokesSolution& stokes_for(const Geometry& g, const MeshPtr& mesh) {
    auto it = stokes_.find(g.label());
    if (it == stokes_.end())
      it = stokes_.emplace(g.label(), solve_stokes(mesh, kDefaultViscosity, default_stokes_force())).first;
    return it->second;
  }

  const PipelineRun& pipeline_run(const std::string& geometry, const Nonlinearity& g) {
    const std::string key = geometry + "/" + (g.kind == Nonlinearity::Kind::Linear ? "linear" : "reciprocal");
    auto it = runs_.find(key);
    if (it == runs_.end()) {
      const DispersionSource source = DispersionSource::table(standard_table(geometry, "fast"));
      IterationConfig cfg;
      cfg.tol = 1e-7;
      cfg.max_iter = 20;
      cfg.threads = options_.threads;
      PipelineRun run;
      run.result = iterate(source_problem(20, 0.1), source, g, g, cfg);
      run.mass = mass_indicator(run.result.trajectory, Rect{0, 1, 1, 2});
      it = runs_.emplace(key, std::move(run)).first;
    }
    return it->second;
  }

  VerifyOptions options_;
  std::map<std::string, MeshPtr> meshes_;
  std::map<std::string, StokesSolution> stokes_;
  std::map<std::string, std::shared_ptr<const CellContext>> contexts_;
  std::map<std::string, std::vector<CellSolution>> sweeps_;
  std::map<std::string, DispersionTable> tables_;
  std::map<std::string, PipelineRun> runs_;
};

}  // namespace twoscale
