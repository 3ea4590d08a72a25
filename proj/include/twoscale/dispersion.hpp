#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "twoscale/cell.hpp"
#include "twoscale/parallel.hpp"

namespace twoscale {

/// Sampled map p -> D̄(p), interpolated piecewise linearly and clamped outside its range.
struct DispersionTable {
  std::vector<double> p_nodes;
  std::vector<Mat2> tensors;
  std::string geometry;
  std::string diffusion_case;
  double h = 0.0;

  int size() const { return static_cast<int>(p_nodes.size()); }
  double p_min() const { return p_nodes.front(); }
  double p_max() const { return p_nodes.back(); }

  void validate() const {
    require(p_nodes.size() >= 2 && p_nodes.size() == tensors.size(), ErrorCode::Precondition,
            "dispersion table needs at least two nodes with one tensor each");
    for (std::size_t k = 1; k < p_nodes.size(); ++k)
      require(p_nodes[k] > p_nodes[k - 1], ErrorCode::Precondition, "table nodes must increase strictly");
    for (std::size_t k = 0; k < tensors.size(); ++k)
      require(symmetric_min_eigenvalue(tensors[k]) > 0.0, ErrorCode::PositivityViolated,
              "tensor at p=" + std::to_string(p_nodes[k]) + " has a non-positive symmetric part");
  }
};

/// Counts evaluations that fell outside the tabulated range.
struct ClampCounter {
  std::atomic<long> count{0};
};

/// Entrywise piecewise-linear interpolation; p outside the range is clamped to the nearest end.
/// With a counter the warning is logged on the first clamp only.
inline Mat2 interp(const DispersionTable& table, double p, ClampCounter* clamps = nullptr) {
  const auto& x = table.p_nodes;
  if (!(p >= x.front() && p <= x.back())) {
    if (!clamps || ++clamps->count == 1)
      log::warn("OutOfRange", "p=" + std::to_string(p) + " clamped to the table range (reported once per run)");
    return std::isnan(p) || p < x.front() ? table.tensors.front() : table.tensors.back();
  }
  const auto it = std::upper_bound(x.begin(), x.end(), p);
  if (it == x.end()) return table.tensors.back();
  const std::size_t k = static_cast<std::size_t>(it - x.begin()) - 1;
  const double s = (p - x[k]) / (x[k + 1] - x[k]);
  if (s == 0.0) return table.tensors[k];
  return (1.0 - s) * table.tensors[k] + s * table.tensors[k + 1];
}

/// Equidistant sweep nodes p_min + k (p_max - p_min)/(n - 1).
inline std::vector<double> sweep_nodes(double p_min, double p_max, int n) {
  require(n >= 2, ErrorCode::Precondition, "a sweep needs at least two nodes");
  require(p_min < p_max, ErrorCode::Precondition, "sweep range must satisfy p_min < p_max");
  std::vector<double> out(n);
  for (int k = 0; k < n; ++k) out[k] = p_min + (p_max - p_min) * k / (n - 1);
  out.back() = p_max;
  return out;
}

/// Solves the cell problem at every p (independently, on `threads` workers).
inline std::vector<CellSolution> solve_sweep(const CellContext& ctx, const std::vector<double>& ps,
                                             int threads = 1) {
  std::vector<CellSolution> out(ps.size());
  parallel_for(static_cast<int>(ps.size()), threads, [&](int k) { out[k] = solve_cell(ctx, ps[k]); });
  return out;
}

inline DispersionTable table_from(const std::vector<CellSolution>& solutions, std::string geometry,
                                  std::string diffusion_case, double h) {
  DispersionTable table;
  table.geometry = std::move(geometry);
  table.diffusion_case = std::move(diffusion_case);
  table.h = h;
  for (const auto& s : solutions) {
    table.p_nodes.push_back(s.p);
    table.tensors.push_back(s.dbar);
  }
  table.validate();
  return table;
}

inline DispersionTable build_table(const CellContext& ctx, double p_min, double p_max, int n_nodes,
                                   int threads = 1, std::string geometry = "custom") {
  const auto nodes = sweep_nodes(p_min, p_max, n_nodes);
  return table_from(solve_sweep(ctx, nodes, threads), std::move(geometry), ctx.diffusion().label,
                    ctx.h_max());
}

// ---------------------------------------------------------------------------------------------
// Persistence

/// File name identifying a table by geometry, diffusion case, cell h and sweep.
inline std::string table_key(const std::string& geometry, const std::string& diffusion_case, double h,
                             double p_min, double p_max, int n) {
  std::ostringstream out;
  out << geometry << '_' << diffusion_case << "_h" << h << "_p" << p_min << '_' << p_max << "_n" << n
      << ".table";
  return out.str();
}

inline void write_table(std::ostream& out, const DispersionTable& table) {
  out << std::setprecision(17);
  out << "geometry " << table.geometry << '\n'
      << "case " << table.diffusion_case << '\n'
      << "h " << table.h << '\n'
      << "p_min " << table.p_min() << '\n'
      << "p_max " << table.p_max() << '\n'
      << "n " << table.size() << '\n';
  for (int k = 0; k < table.size(); ++k) {
    const Mat2& d = table.tensors[k];
    out << table.p_nodes[k] << ' ' << d(0, 0) << ' ' << d(0, 1) << ' ' << d(1, 0) << ' ' << d(1, 1) << '\n';
  }
}

inline DispersionTable read_table(std::istream& in) {
  DispersionTable table;
  std::string key;
  double p_min = 0, p_max = 0;
  int n = 0;
  for (const char* expected : {"geometry", "case", "h", "p_min", "p_max", "n"}) {
    require(static_cast<bool>(in >> key) && key == expected, ErrorCode::Io,
            std::string("table header is missing '") + expected + "'");
    if (key == "geometry") in >> table.geometry;
    else if (key == "case") in >> table.diffusion_case;
    else if (key == "h") in >> table.h;
    else if (key == "p_min") in >> p_min;
    else if (key == "p_max") in >> p_max;
    else in >> n;
  }
  require(static_cast<bool>(in) && n >= 2, ErrorCode::Io, "malformed table header");
  for (int k = 0; k < n; ++k) {
    double p;
    Mat2 d;
    require(static_cast<bool>(in >> p >> d(0, 0) >> d(0, 1) >> d(1, 0) >> d(1, 1)), ErrorCode::Io,
            "table has fewer rows than announced");
    table.p_nodes.push_back(p);
    table.tensors.push_back(d);
  }
  require(table.p_min() == p_min && table.p_max() == p_max, ErrorCode::Io, "table range disagrees with header");
  table.validate();
  return table;
}

inline void write_table_file(const std::string& path, const DispersionTable& table) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + path);
  write_table(out, table);
}

inline DispersionTable read_table_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot read " + path);
  return read_table(in);
}

/// CSV with columns p, D11, D12, D21, D22.
inline void write_table_csv(std::ostream& out, const DispersionTable& table) {
  out << std::setprecision(12) << "p,D11,D12,D21,D22\n";
  for (int k = 0; k < table.size(); ++k) {
    const Mat2& d = table.tensors[k];
    out << table.p_nodes[k] << ',' << d(0, 0) << ',' << d(0, 1) << ',' << d(1, 0) << ',' << d(1, 1) << '\n';
  }
}

// ---------------------------------------------------------------------------------------------
// Nonlinearities and the macro tensor

/// Drift coupling G(u).
struct Nonlinearity {
  enum class Kind { Linear, ReciprocalAbs, Tabulated, Function };
  Kind kind = Kind::Linear;
  double a = 1.0;        // Linear: a + b u
  double b = -2.0;
  double epsilon = 1e-4; // ReciprocalAbs: 1 / (epsilon + |1 - 2u|)
  std::vector<double> u_nodes, g_values;  // Tabulated
  std::function<double(double)> function;
  std::string description;

  static Nonlinearity linear(double a, double b) {
    Nonlinearity g;
    g.kind = Kind::Linear;
    g.a = a;
    g.b = b;
    return g;
  }
  static Nonlinearity constant(double c) { return linear(c, 0.0); }
  /// G(u) = 1 - 2u.
  static Nonlinearity tasep() { return linear(1.0, -2.0); }
  /// G(u) = 1 / (epsilon + |1 - 2u|).
  static Nonlinearity reciprocal_abs(double epsilon = 1e-4) {
    require(epsilon > 0.0, ErrorCode::Precondition, "epsilon must be positive");
    Nonlinearity g;
    g.kind = Kind::ReciprocalAbs;
    g.epsilon = epsilon;
    return g;
  }
  static Nonlinearity tabulated(std::vector<double> u, std::vector<double> values) {
    require(u.size() >= 2 && u.size() == values.size(), ErrorCode::Precondition,
            "tabulated nonlinearity needs matching nodes and values");
    for (std::size_t k = 1; k < u.size(); ++k)
      require(u[k] > u[k - 1], ErrorCode::Precondition, "tabulated nodes must increase");
    Nonlinearity g;
    g.kind = Kind::Tabulated;
    g.u_nodes = std::move(u);
    g.g_values = std::move(values);
    return g;
  }
  static Nonlinearity from_function(std::function<double(double)> f, std::string text) {
    Nonlinearity g;
    g.kind = Kind::Function;
    g.function = std::move(f);
    g.description = std::move(text);
    return g;
  }

  bool is_constant() const { return kind == Kind::Linear && b == 0.0; }

  double operator()(double u) const {
    switch (kind) {
      case Kind::Linear:
        return a + b * u;
      case Kind::ReciprocalAbs:
        return 1.0 / (epsilon + std::abs(1.0 - 2.0 * u));
      case Kind::Tabulated: {
        if (u <= u_nodes.front()) return g_values.front();
        if (u >= u_nodes.back()) return g_values.back();
        const auto it = std::upper_bound(u_nodes.begin(), u_nodes.end(), u);
        const std::size_t k = static_cast<std::size_t>(it - u_nodes.begin()) - 1;
        const double s = (u - u_nodes[k]) / (u_nodes[k + 1] - u_nodes[k]);
        return (1.0 - s) * g_values[k] + s * g_values[k + 1];
      }
      case Kind::Function:
        return function(u);
    }
    return 0.0;
  }
};

/// Which index of D* is drawn from which parameter p_j = G_j(u).
enum class IndexConvention { Column, Row };

/// D*(u): column j is column j of interp(table_j, G_j(u)) (Row: row i of interp(table_i, G_i(u))).
inline Mat2 dstar_at(const DispersionTable& table1, const DispersionTable& table2, const Nonlinearity& g1,
                     const Nonlinearity& g2, double u, IndexConvention convention = IndexConvention::Column,
                     ClampCounter* clamps = nullptr) {
  const Mat2 t1 = interp(table1, g1(u), clamps);
  const Mat2 t2 = interp(table2, g2(u), clamps);
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

}  // namespace twoscale
