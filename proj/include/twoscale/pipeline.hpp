#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>

#include "twoscale/scenario.hpp"

namespace twoscale {

/// Cell mesh, Stokes drift and cell-problem context of a scenario.
struct CellSetup {
  MeshPtr mesh;
  StokesSolution stokes;
  std::shared_ptr<const CellContext> context;
  double stokes_seconds = 0.0;
};

inline MeshPtr cell_mesh(const Scenario& sc) {
  return std::make_shared<const TriMesh>(build_cell_mesh(sc.geometry, sc.cell_h));
}

inline MeshPtr macro_mesh(const Scenario& sc) {
  return std::make_shared<const TriMesh>(build_macro_mesh(sc.domain, sc.n1, sc.n2));
}

inline CellSetup prepare_cell(const Scenario& sc) {
  CellSetup out;
  out.mesh = cell_mesh(sc);
  const auto start = std::chrono::steady_clock::now();
  out.stokes = solve_stokes(out.mesh, sc.mu, sc.stokes_force());
  out.stokes_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.context = std::make_shared<const CellContext>(out.mesh, sc.diffusion(), out.stokes);
  return out;
}

/// Identifier of everything the table depends on besides the sweep: geometry, cell h,
/// diffusion and Stokes data.
inline std::string cell_tag(const Scenario& sc) {
  const auto& s = sc.settings;
  std::string geometry = s.get("geometry");
  for (char& c : geometry)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') c = '_';
  std::string hashed = s.get("stokes.mu") + '|' + s.get("stokes.f1") + '|' + s.get("stokes.f2");
  if (sc.diffusion_kind == "custom")
    hashed += '|' + s.get("diffusion.d11") + '|' + s.get("diffusion.d22") + '|' + s.get("diffusion.theta");
  if (sc.geometry.kind == GeometryKind::Custom) hashed += '|' + sc.geometry.mesh_file;
  std::ostringstream out;
  out << geometry << '-' << std::hex << (std::hash<std::string>{}(hashed) & 0xffffffffu);
  return out.str();
}

/// Reads the sweep table from `dir` when a file with the matching key exists, otherwise
/// solves the sweep and stores it there (when dir is non-empty).
inline DispersionTable obtain_table(const Scenario& sc, const CellContext& ctx, const std::filesystem::path& dir,
                                    bool* reused = nullptr) {
  const std::string tag = cell_tag(sc);
  const std::string key = table_key(tag, ctx.diffusion().label, sc.cell_h, sc.p_min, sc.p_max, sc.sweep_n);
  if (reused) *reused = false;
  if (!dir.empty() && std::filesystem::exists(dir / key)) {
    DispersionTable table = read_table_file((dir / key).string());
    if (table.geometry == tag && table.size() == sc.sweep_n) {
      if (reused) *reused = true;
      log::info("reusing table " + (dir / key).string());
      return table;
    }
  }
  const auto nodes = sweep_nodes(sc.p_min, sc.p_max, sc.sweep_n);
  DispersionTable table = table_from(solve_sweep(ctx, nodes, sc.threads), tag, ctx.diffusion().label, sc.cell_h);
  if (!dir.empty()) {
    std::filesystem::create_directories(dir);
    write_table_file((dir / key).string(), table);
    std::ofstream csv(dir / (key + ".csv"));
    write_table_csv(csv, table);
  }
  return table;
}

struct SimulationOutput {
  IterationResult result;
  std::vector<double> mass;
  bool table_reused = false;
  double stokes_seconds = 0.0;
  double sweep_seconds = 0.0;
};

inline void write_metadata(std::ostream& out, const Scenario& sc) {
  out << "# effective settings; this file is a scenario reproducing the run\n";
  sc.settings.write(out);
}

/// Stokes -> sweep -> iteration for one scenario. With a non-empty output directory the
/// table, snapshots, M(t), the iteration report and the run metadata are written there.
inline SimulationOutput simulate(const Scenario& sc, const std::filesystem::path& out_dir = {}) {
  using clock = std::chrono::steady_clock;
  SimulationOutput out;
  const CellSetup cell = prepare_cell(sc);
  out.stokes_seconds = cell.stokes_seconds;
  auto t0 = clock::now();
  const DispersionTable table =
      obtain_table(sc, *cell.context, out_dir.empty() ? out_dir : out_dir / "tables", &out.table_reused);
  out.sweep_seconds = std::chrono::duration<double>(clock::now() - t0).count();

  const Nonlinearity g1 = sc.nonlinearity(1), g2 = sc.nonlinearity(2);
  const DispersionSource source = sc.iteration.dispersion == DispersionMode::Table
                                      ? DispersionSource::table(table)
                                      : DispersionSource::direct(*cell.context, sc.threads);
  out.result = iterate(sc.macro_problem(macro_mesh(sc)), source, g1, g2, sc.iteration);
  out.result.report.phase_seconds["stokes"] = out.stokes_seconds;
  out.result.report.phase_seconds["sweep"] = out.sweep_seconds;
  out.mass = mass_indicator(out.result.trajectory, sc.subdomain);

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir / "snapshots");
    const auto& traj = out.result.trajectory;
    for (int n = 0; n < traj.size(); ++n) {
      if (n % sc.snapshot_every != 0 && n + 1 != traj.size()) continue;
      std::ostringstream name;
      name << "u_" << std::setw(4) << std::setfill('0') << n << ".txt";
      std::ofstream snap(out_dir / "snapshots" / name.str());
      snap << "# t = " << std::setprecision(12) << traj.times[n] << "\n# index x y u\n";
      write_vertex_field(snap, traj.fields[n]);
    }
    std::ofstream mass(out_dir / "mass.csv");
    write_mass_csv(mass, traj.times, out.mass);
    std::ofstream report(out_dir / "iterations.csv");
    out.result.report.write_csv(report);
    std::ofstream meta(out_dir / "metadata.txt");
    write_metadata(meta, sc);
  }
  return out;
}

}  // namespace twoscale
