#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "twoscale/twoscale.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace twoscale;

namespace {

struct Common {
  std::string scenario;
  std::string out;
  int threads = 0;
  std::vector<std::string> overrides;
  bool verbose = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("scenario", c.scenario, "Scenario file (key = value lines)");
  cmd->add_option("-o,--out", c.out, "Output directory (default: the scenario's 'output' key)");
  cmd->add_option("-j,--threads", c.threads, "Worker threads for cell sweeps (0: scenario value)");
  cmd->add_option("-s,--set", c.overrides, "Override a scenario key, e.g. -s macro.dt=0.1");
  cmd->add_flag("-v,--verbose", c.verbose, "Log warnings and progress to stderr");
}

Scenario load(const Common& c) {
  log::verbose() = c.verbose;
  std::vector<std::string> overrides = c.overrides;
  if (c.threads > 0) overrides.push_back("threads=" + std::to_string(c.threads));
  if (!c.out.empty()) overrides.push_back("output=" + c.out);
  return load_scenario(c.scenario, overrides);
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream(path) << j.dump(2) << '\n';
}

json matrix_json(const Mat2& m) { return {{m(0, 0), m(0, 1)}, {m(1, 0), m(1, 1)}}; }

int run_mesh(const Common& c) {
  const Scenario sc = load(c);
  const fs::path dir = fs::path(sc.output) / "mesh";
  fs::create_directories(dir);
  const MeshPtr cell = cell_mesh(sc);
  const MeshPtr macro = macro_mesh(sc);
  write_mesh_file((dir / "cell.mesh").string(), *cell);
  write_mesh_file((dir / "macro.mesh").string(), *macro);
  const json summary = {{"cell", {{"vertices", cell->num_vertices()},
                                  {"triangles", cell->num_triangles()},
                                  {"periodic_pairs", cell->periodic_pairs.size()},
                                  {"fluid_area", fluid_area(*cell)}}},
                        {"macro", {{"vertices", macro->num_vertices()}, {"triangles", macro->num_triangles()}}}};
  write_json(dir / "summary.json", summary);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int run_stokes(const Common& c) {
  const Scenario sc = load(c);
  const fs::path dir = fs::path(sc.output) / "stokes";
  fs::create_directories(dir);
  const CellSetup cell = prepare_cell(sc);
  const auto& d = cell.stokes.diagnostics;
  {
    std::ofstream v(dir / "velocity.txt");
    v << "# index y1 y2 B1 B2 (P2 field at mesh vertices)\n";
    write_vertex_field(v, cell.stokes.velocity);
    std::ofstream p(dir / "pressure.txt");
    p << "# index y1 y2 p\n";
    write_vertex_field(p, cell.stokes.pressure);
  }
  const json summary = {{"velocity_max", d.velocity_max}, {"residual", d.residual},
                        {"weak_divergence", d.weak_divergence}, {"divergence_l2", d.divergence_l2},
                        {"gradient_l2", d.gradient_l2}, {"dissipation", d.dissipation},
                        {"work", d.work}, {"pressure_mean", d.pressure_mean},
                        {"velocity_dofs", d.velocity_dofs}, {"pressure_dofs", d.pressure_dofs},
                        {"cg_iterations", d.cg_iterations}, {"seconds", cell.stokes_seconds}};
  write_json(dir / "summary.json", summary);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int run_sweep(const Common& c) {
  const Scenario sc = load(c);
  const CellSetup cell = prepare_cell(sc);
  bool reused = false;
  const DispersionTable table = obtain_table(sc, *cell.context, fs::path(sc.output) / "tables", &reused);
  json rows = json::array();
  for (int k = 0; k < table.size(); ++k) rows.push_back({{"p", table.p_nodes[k]}, {"dbar", matrix_json(table.tensors[k])}});
  const json summary = {{"geometry", table.geometry}, {"case", table.diffusion_case}, {"h", table.h},
                        {"nodes", table.size()}, {"reused", reused}, {"peclet_at_pmax", cell.context->peclet(sc.p_max)},
                        {"table", rows}};
  write_json(fs::path(sc.output) / "tables" / "sweep.json", summary);
  std::cout << "table " << table.geometry << " (" << table.size() << " nodes, " << (reused ? "reused" : "computed")
            << ") written to " << (fs::path(sc.output) / "tables").string() << '\n';
  return 0;
}

int run_simulate(const Common& c) {
  const Scenario sc = load(c);
  const fs::path dir(sc.output);
  const SimulationOutput out = simulate(sc, dir);
  const auto& rep = out.result.report;
  const json summary = {{"converged", rep.converged},
                        {"status", rep.converged ? "converged" : "NotConverged"},
                        {"iterations", rep.iterations},
                        {"errors", rep.errors},
                        {"clamp_warnings", rep.clamp_warnings},
                        {"cell_solves", rep.cell_solves},
                        {"bound_violations", rep.bound_violations},
                        {"linf_bound", out.result.trajectory.linf_bound},
                        {"table_reused", out.table_reused},
                        {"times", out.result.trajectory.times},
                        {"mass", out.mass},
                        {"phase_seconds", rep.phase_seconds}};
  write_json(dir / "results.json", summary);
  std::cout << "iterations " << rep.iterations << (rep.converged ? " (converged)" : " (NotConverged)")
            << ", last e_k " << rep.errors.back() << ", M(T) " << out.mass.back() << ", clamps "
            << rep.clamp_warnings << "\noutputs in " << dir.string() << '\n';
  return rep.converged ? 0 : 4;
}

int run_verify(const Common& c, const std::vector<std::string>& checks) {
  log::verbose() = c.verbose;
  VerifyOptions options;
  if (c.threads > 0) options.threads = c.threads;
  AcceptanceSuite suite(options);
  const auto names = checks.empty() ? AcceptanceSuite::names() : checks;
  json results = json::array();
  int failed = 0;
  for (const auto& name : names) {
    const OracleResult r = suite.run(name);
    std::printf("[%s] %-30s %7.1fs  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds, r.detail.c_str());
    std::fflush(stdout);
    failed += r.passed ? 0 : 1;
    results.push_back({{"name", r.name}, {"passed", r.passed}, {"computed", r.computed},
                       {"reference", r.reference}, {"tolerance", r.tolerance}, {"seconds", r.seconds},
                       {"detail", r.detail}});
  }
  const fs::path dir = c.out.empty() ? fs::path("out") : fs::path(c.out);
  write_json(dir / "verify.json", results);
  std::printf("%zu of %zu checks passed\n", names.size() - failed, names.size());
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-scale dispersion: cell problems, dispersion tables and the macro fixed-point iteration"};
  app.require_subcommand(1);
  Common common;
  std::vector<std::string> checks;
  auto* mesh = app.add_subcommand("mesh", "Write the cell and macro meshes");
  auto* stokes = app.add_subcommand("stokes", "Solve the periodic Stokes drift and write B");
  auto* sweep = app.add_subcommand("sweep", "Tabulate the dispersion tensor over the p-sweep");
  auto* simulate_cmd = app.add_subcommand("simulate", "Run the coupled iteration and write M(t) and snapshots");
  auto* verify = app.add_subcommand("verify", "Run the oracle and acceptance checks");
  for (auto* cmd : {mesh, stokes, sweep, simulate_cmd}) add_common(cmd, common);
  verify->add_option("-o,--out", common.out, "Directory for verify.json");
  verify->add_option("-j,--threads", common.threads, "Worker threads");
  verify->add_option("-c,--check", checks, "Run only these checks")
      ->check(CLI::IsMember(AcceptanceSuite::names()));
  verify->add_flag("-v,--verbose", common.verbose, "Log warnings to stderr");
  CLI11_PARSE(app, argc, argv);

  try {
    if (*mesh) return run_mesh(common);
    if (*stokes) return run_stokes(common);
    if (*sweep) return run_sweep(common);
    if (*simulate_cmd) return run_simulate(common);
    if (*verify) return run_verify(common, checks);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == ErrorCode::ConfigInvalid || e.code() == ErrorCode::ExpressionSyntax ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
