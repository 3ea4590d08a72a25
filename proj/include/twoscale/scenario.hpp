#pragma once

#include <fstream>
#include <map>
#include <sstream>

#include "twoscale/expression.hpp"
#include "twoscale/scheme.hpp"

namespace twoscale {

/// Flat key = value settings. Every key has a default, so a dump of the effective settings
/// is itself a scenario that reproduces the run.
class Settings {
 public:
  Settings() : values_(defaults()) {}

  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d = {
        {"name", "scenario"},
        {"output", "out"},
        {"threads", "1"},
        // unit cell
        {"geometry", "disk"},
        {"cell.h", "0.025"},
        {"diffusion", "fast"},
        {"diffusion.d11", "2"},
        {"diffusion.d22", "2"},
        {"diffusion.theta", "2"},
        // Stokes drift (viscosity, body force)
        {"stokes.mu", "0.01"},
        {"stokes.f1", "10*sin(2*pi*x)*sin(2*pi*y)"},
        {"stokes.f2", "10*sin(2*pi*x)*cos(2*pi*y)"},
        // p-sweep
        {"sweep.p_min", "-10"},
        {"sweep.p_max", "10"},
        {"sweep.n", "101"},
        // macro problem
        {"macro.domain", "0 0 1 2"},
        {"macro.n1", "50"},
        {"macro.n2", "50"},
        {"macro.T", "2"},
        {"macro.dt", "0.05"},
        {"macro.g", "exp(-10*((x-0.5)^2+(y-0.5)^2))*ball(0.5,0.5,0.25)"},
        {"macro.f", "1000*ball(0.5,0.5,0.25)"},
        {"macro.sampling", "quadrature"},
        {"macro.lumped", "false"},
        {"macro.subdomain", "0 1 1 2"},
        {"macro.snapshot_every", "1"},
        // nonlinearities p_j = G_j(u)
        {"G1", "1-2*u"},
        {"G2", "1-2*u"},
        // outer iteration
        {"iteration.tol", "1e-7"},
        {"iteration.max_iter", "20"},
        {"iteration.mode", "fixed_point"},
        {"iteration.dispersion", "table"},
        {"iteration.convention", "column"},
    };
    return d;
  }

  void set(const std::string& key, const std::string& value) {
    require(defaults().count(key) > 0, ErrorCode::ConfigInvalid, "unknown key '" + key + "'");
    values_[key] = value;
  }

  const std::string& get(const std::string& key) const { return values_.at(key); }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Applies "key = value" lines; '#' starts a comment.
  void parse(std::istream& in, const std::string& source = "scenario") {
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      require(eq != std::string::npos, ErrorCode::ConfigInvalid,
              source + ":" + std::to_string(number) + ": expected 'key = value'");
      const std::string key = trim(trimmed.substr(0, eq));
      try {
        set(key, trim(trimmed.substr(eq + 1)));
      } catch (const Error& e) {
        throw Error(e.code(), source + ":" + std::to_string(number) + ": " + e.what_message());
      }
    }
  }

  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string::npos, ErrorCode::ConfigInvalid, "override '" + assignment + "' is not key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

  void write(std::ostream& out) const {
    for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

 private:
  std::map<std::string, std::string> values_;
};

/// Typed view of the settings, validated field by field.
struct Scenario {
  Settings settings;
  std::string name;
  std::string output;
  int threads = 1;

  Geometry geometry;
  double cell_h = 0.025;
  std::string diffusion_kind;
  Expression d11, d22;
  double theta = 1.0;

  double mu = kDefaultViscosity;
  Expression f1, f2;

  double p_min = -10, p_max = 10;
  int sweep_n = 101;

  Rect domain{0, 0, 1, 2};
  int n1 = 50, n2 = 50;
  double T = 2.0, dt = 0.05;
  Expression g, f;
  TensorSampling sampling = TensorSampling::QuadraturePoint;
  bool lumped = false;
  Rect subdomain{0, 1, 1, 2};
  int snapshot_every = 1;

  Expression G1, G2;
  IterationConfig iteration;

  DiffusionCase diffusion() const {
    if (diffusion_kind == "fast") return fast_diffusion();
    if (diffusion_kind == "slow") return slow_diffusion();
    return {"custom",
            [a = d11, b = d22](const Vec2& y) {
              Mat2 d = Mat2::Zero();
              d(0, 0) = a(y.x(), y.y());
              d(1, 1) = b(y.x(), y.y());
              return d;
            },
            theta};
  }

  VectorFunction stokes_force() const {
    return [a = f1, b = f2](const Vec2& y) { return Vec2(a(y.x(), y.y()), b(y.x(), y.y())); };
  }

  Nonlinearity nonlinearity(int j) const {
    const Expression& e = j == 1 ? G1 : G2;
    if (!e.uses('u')) return Nonlinearity::constant(e(0, 0));
    return Nonlinearity::from_function([e](double u) { return e(0, 0, 0, u); }, e.text());
  }

  MacroProblem macro_problem(MeshPtr mesh) const {
    MacroProblem pb;
    pb.mesh = std::move(mesh);
    pb.T = T;
    pb.dt = dt;
    pb.g = [e = g](const Vec2& x) { return e(x.x(), x.y()); };
    pb.f = [e = f](double t, const Vec2& x) { return e(x.x(), x.y(), t); };
    pb.sampling = sampling;
    pb.lumped_mass = lumped;
    return pb;
  }

  static Scenario from(const Settings& s) {
    Scenario sc;
    sc.settings = s;
    sc.name = s.get("name");
    sc.output = s.get("output");
    sc.threads = integer(s, "threads");
    sc.geometry = parse_geometry(s.get("geometry"));
    sc.cell_h = positive(s, "cell.h");
    sc.diffusion_kind = s.get("diffusion");
    field(sc.diffusion_kind == "fast" || sc.diffusion_kind == "slow" || sc.diffusion_kind == "custom", "diffusion",
          "must be fast, slow or custom");
    sc.d11 = expression(s, "diffusion.d11");
    sc.d22 = expression(s, "diffusion.d22");
    sc.theta = positive(s, "diffusion.theta");
    sc.mu = positive(s, "stokes.mu");
    sc.f1 = expression(s, "stokes.f1");
    sc.f2 = expression(s, "stokes.f2");
    sc.p_min = number(s, "sweep.p_min");
    sc.p_max = number(s, "sweep.p_max");
    field(sc.p_min < sc.p_max, "sweep.p_max", "must exceed sweep.p_min");
    sc.sweep_n = integer(s, "sweep.n");
    field(sc.sweep_n >= 2, "sweep.n", "must be at least 2");
    sc.domain = rect(s, "macro.domain");
    sc.n1 = integer(s, "macro.n1");
    sc.n2 = integer(s, "macro.n2");
    field(sc.n1 >= 2 && sc.n2 >= 2, "macro.n1", "macro grid needs at least 2 nodes per axis");
    sc.T = positive(s, "macro.T");
    sc.dt = positive(s, "macro.dt");
    const double steps = sc.T / sc.dt;
    field(std::abs(steps - std::round(steps)) <= 1e-9 * steps, "macro.dt", "must divide macro.T");
    sc.g = expression(s, "macro.g");
    sc.f = expression(s, "macro.f");
    const std::string sampling = s.get("macro.sampling");
    if (sampling == "quadrature") sc.sampling = TensorSampling::QuadraturePoint;
    else if (sampling == "element") sc.sampling = TensorSampling::ElementAverage;
    else if (sampling == "vertex") sc.sampling = TensorSampling::Vertex;
    else field(false, "macro.sampling", "must be quadrature, element or vertex");
    sc.lumped = boolean(s, "macro.lumped");
    sc.subdomain = rect(s, "macro.subdomain");
    sc.snapshot_every = integer(s, "macro.snapshot_every");
    field(sc.snapshot_every >= 1, "macro.snapshot_every", "must be at least 1");
    sc.G1 = expression(s, "G1");
    sc.G2 = expression(s, "G2");
    sc.iteration.tol = positive(s, "iteration.tol");
    sc.iteration.max_iter = integer(s, "iteration.max_iter");
    field(sc.iteration.max_iter >= 1, "iteration.max_iter", "must be at least 1");
    const std::string mode = s.get("iteration.mode");
    if (mode == "fixed_point") sc.iteration.mode = IterationMode::TrajectoryFixedPoint;
    else if (mode == "time_lagged") sc.iteration.mode = IterationMode::TimeLaggedSweep;
    else field(false, "iteration.mode", "must be fixed_point or time_lagged");
    const std::string disp = s.get("iteration.dispersion");
    if (disp == "table") sc.iteration.dispersion = DispersionMode::Table;
    else if (disp == "direct") sc.iteration.dispersion = DispersionMode::DirectPerNode;
    else field(false, "iteration.dispersion", "must be table or direct");
    const std::string conv = s.get("iteration.convention");
    if (conv == "column") sc.iteration.convention = IndexConvention::Column;
    else if (conv == "row") sc.iteration.convention = IndexConvention::Row;
    else field(false, "iteration.convention", "must be column or row");
    sc.iteration.threads = sc.threads;
    return sc;
  }

  /// disk | two_rects | full | disk(cx, cy, r) | two_rects(x0, y0, x1, y1, x0, y0, x1, y1) | file:<path>
  static Geometry parse_geometry(const std::string& text) {
    if (text == "disk") return geometry_one();
    if (text == "two_rects") return geometry_two();
    if (text == "full") return Geometry::full();
    if (text.rfind("file:", 0) == 0) return Geometry::custom(text.substr(5));
    const auto open = text.find('(');
    field(open != std::string::npos && text.back() == ')', "geometry", "unrecognised geometry '" + text + "'");
    const std::string kind = Settings::trim(text.substr(0, open));
    std::string args = text.substr(open + 1, text.size() - open - 2);
    std::replace(args.begin(), args.end(), ',', ' ');
    std::istringstream in(args);
    std::vector<double> v;
    for (double x; in >> x;) v.push_back(x);
    field(in.eof(), "geometry", "arguments must be numbers");
    Geometry g;
    if (kind == "disk" && v.size() == 3) g = Geometry::disk({v[0], v[1]}, v[2]);
    else if (kind == "two_rects" && v.size() == 8)
      g = Geometry::two_rects({v[0], v[1], v[2], v[3]}, {v[4], v[5], v[6], v[7]});
    else field(false, "geometry", "expected disk(cx, cy, r) or two_rects(8 numbers)");
    try {
      g.validate();
    } catch (const Error& e) {
      field(false, "geometry", e.what_message());
    }
    return g;
  }

 private:
  static void field(bool ok, const std::string& key, const std::string& message) {
    require(ok, ErrorCode::ConfigInvalid, key + ": " + message);
  }

  static double number(const Settings& s, const std::string& key) {
    const std::string& v = s.get(key);
    std::size_t used = 0;
    double x = 0;
    try {
      x = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    field(used == v.size() && used > 0 && std::isfinite(x), key, "'" + v + "' is not a number");
    return x;
  }

  static double positive(const Settings& s, const std::string& key) {
    const double x = number(s, key);
    field(x > 0, key, "must be positive (got " + s.get(key) + ")");
    return x;
  }

  static int integer(const Settings& s, const std::string& key) {
    const double x = number(s, key);
    field(x == std::floor(x) && std::abs(x) < 1e9, key, "must be an integer");
    return static_cast<int>(x);
  }

  static bool boolean(const Settings& s, const std::string& key) {
    const std::string& v = s.get(key);
    field(v == "true" || v == "false", key, "must be true or false");
    return v == "true";
  }

  static Rect rect(const Settings& s, const std::string& key) {
    std::istringstream in(s.get(key));
    Rect r;
    field(static_cast<bool>(in >> r.x0 >> r.y0 >> r.x1 >> r.y1), key, "expected four numbers x0 y0 x1 y1");
    field(r.x1 > r.x0 && r.y1 > r.y0, key, "rectangle must have positive extent");
    return r;
  }

  static Expression expression(const Settings& s, const std::string& key) {
    try {
      return Expression(s.get(key));
    } catch (const Error& e) {
      throw Error(e.code(), key + ": " + e.what_message());
    }
  }
};

inline Scenario load_scenario(const std::string& path, const std::vector<std::string>& overrides = {}) {
  Settings s;
  if (!path.empty()) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::Io, "cannot read scenario " + path);
    s.parse(in, path);
  }
  for (const auto& o : overrides) s.apply_override(o);
  return Scenario::from(s);
}

}  // namespace twoscale
