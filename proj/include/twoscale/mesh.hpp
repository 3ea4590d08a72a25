#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "twoscale/error.hpp"

namespace twoscale {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

struct Rect {
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double area() const { return width() * height(); }
  bool contains(const Vec2& p, double tol = 0.0) const {
    return p.x() >= x0 - tol && p.x() <= x1 + tol && p.y() >= y0 - tol && p.y() <= y1 + tol;
  }
  bool strictly_inside(const Rect& outer) const {
    return x0 > outer.x0 && y0 > outer.y0 && x1 < outer.x1 && y1 < outer.y1;
  }
};

inline constexpr Rect kUnitCell{0.0, 0.0, 1.0, 1.0};

enum class GeometryKind { Disk, TwoRects, Full, Custom };

/// Shape of the perforated unit cell Y = (0,1)^2 minus a closed obstacle.
struct Geometry {
  GeometryKind kind = GeometryKind::Full;
  Vec2 center{0.5, 0.5};
  double radius = 0.0;
  std::array<Rect, 2> rects{};
  std::string mesh_file;

  static Geometry full() { return {}; }
  static Geometry disk(Vec2 c, double r) {
    Geometry g;
    g.kind = GeometryKind::Disk;
    g.center = c;
    g.radius = r;
    return g;
  }
  static Geometry two_rects(Rect a, Rect b) {
    Geometry g;
    g.kind = GeometryKind::TwoRects;
    g.rects = {a, b};
    return g;
  }
  static Geometry custom(std::string path) {
    Geometry g;
    g.kind = GeometryKind::Custom;
    g.mesh_file = std::move(path);
    return g;
  }

  void validate() const {
    switch (kind) {
      case GeometryKind::Full:
        return;
      case GeometryKind::Disk: {
        require(radius > 0, ErrorCode::GeometryInvalid, "disk radius must be positive");
        const double gap = std::min({center.x(), center.y(), 1 - center.x(), 1 - center.y()});
        require(gap > radius, ErrorCode::GeometryInvalid,
                "disk must lie strictly inside the unit cell");
        return;
      }
      case GeometryKind::TwoRects:
        for (const Rect& r : rects) {
          require(r.x1 > r.x0 && r.y1 > r.y0, ErrorCode::GeometryInvalid,
                  "obstacle rectangle has non-positive extent");
          require(r.strictly_inside(kUnitCell), ErrorCode::GeometryInvalid,
                  "obstacle rectangle must lie strictly inside the unit cell");
        }
        return;
      case GeometryKind::Custom:
        require(!mesh_file.empty(), ErrorCode::GeometryInvalid, "custom geometry needs a mesh file");
        return;
    }
  }

  bool in_obstacle(const Vec2& y) const {
    switch (kind) {
      case GeometryKind::Disk:
        return (y - center).norm() <= radius;
      case GeometryKind::TwoRects:
        return rects[0].contains(y) || rects[1].contains(y);
      default:
        return false;
    }
  }

  /// Exact |Y| of the smooth geometry (not of its polygonal approximation).
  double analytic_fluid_area() const {
    switch (kind) {
      case GeometryKind::Disk:
        return 1.0 - std::numbers::pi * radius * radius;
      case GeometryKind::TwoRects: {
        const Rect& a = rects[0];
        const Rect& b = rects[1];
        const double ox = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
        const double oy = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
        return 1.0 - a.area() - b.area() + ox * oy;
      }
      default:
        return 1.0;
    }
  }

  std::string label() const {
    switch (kind) {
      case GeometryKind::Full: return "full";
      case GeometryKind::Disk: return "disk";
      case GeometryKind::TwoRects: return "two_rects";
      case GeometryKind::Custom: return "custom";
    }
    return "unknown";
  }
};

/// Disk of radius 0.25 centred in the cell.
inline Geometry geometry_one() { return Geometry::disk({0.5, 0.5}, 0.25); }

/// Two horizontal bars [0.1,0.9]x[0.1,0.2] and [0.1,0.9]x[0.8,0.9].
inline Geometry geometry_two() {
  return Geometry::two_rects({0.1, 0.1, 0.9, 0.2}, {0.1, 0.8, 0.9, 0.9});
}

enum class EdgeTag { Left, Right, Bottom, Top, Obstacle, Interior };

inline std::string_view to_string(EdgeTag tag) {
  switch (tag) {
    case EdgeTag::Left: return "Left";
    case EdgeTag::Right: return "Right";
    case EdgeTag::Bottom: return "Bottom";
    case EdgeTag::Top: return "Top";
    case EdgeTag::Obstacle: return "Obstacle";
    case EdgeTag::Interior: return "Interior";
  }
  return "Interior";
}

inline EdgeTag edge_tag_from_string(std::string_view name) {
  for (EdgeTag t : {EdgeTag::Left, EdgeTag::Right, EdgeTag::Bottom, EdgeTag::Top,
                    EdgeTag::Obstacle, EdgeTag::Interior}) {
    if (to_string(t) == name) return t;
  }
  throw Error(ErrorCode::MeshFormat, "unknown edge tag '" + std::string(name) + "'");
}

/// Conforming triangulation. Local edge k of a triangle is the one opposite local vertex k.
struct TriMesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::array<int, 2>> edges;
  std::vector<EdgeTag> edge_tags;
  std::vector<std::array<int, 3>> triangle_edges;
  /// (Left or Bottom vertex, its Right or Top partner).
  std::vector<std::pair<int, int>> periodic_pairs;
  Rect box = kUnitCell;
  double h = 0.0;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }

  double signed_area(int t) const {
    const auto& tri = triangles[t];
    const Vec2 a = vertices[tri[1]] - vertices[tri[0]];
    const Vec2 b = vertices[tri[2]] - vertices[tri[0]];
    return 0.5 * (a.x() * b.y() - a.y() * b.x());
  }

  bool has_tag(EdgeTag tag) const {
    return std::find(edge_tags.begin(), edge_tags.end(), tag) != edge_tags.end();
  }

  /// Sorted, unique vertex indices touching an edge with the given tag.
  std::vector<int> vertices_with_tag(EdgeTag tag) const {
    std::vector<int> out;
    for (int e = 0; e < num_edges(); ++e) {
      if (edge_tags[e] == tag) {
        out.push_back(edges[e][0]);
        out.push_back(edges[e][1]);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  std::vector<int> edges_with_tag(EdgeTag tag) const {
    std::vector<int> out;
    for (int e = 0; e < num_edges(); ++e)
      if (edge_tags[e] == tag) out.push_back(e);
    return out;
  }
};

struct MeshOptions {
  double min_angle_deg = 10.0;
};

inline double fluid_area(const TriMesh& mesh) {
  double sum = 0.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) sum += mesh.signed_area(t);
  return sum;
}

inline double min_angle_deg(const TriMesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  double best = 180.0;
  for (int k = 0; k < 3; ++k) {
    const Vec2 a = mesh.vertices[tri[(k + 1) % 3]] - mesh.vertices[tri[k]];
    const Vec2 b = mesh.vertices[tri[(k + 2) % 3]] - mesh.vertices[tri[k]];
    const double c = std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0);
    best = std::min(best, std::acos(c) * 180.0 / std::numbers::pi);
  }
  return best;
}

inline double min_angle_deg(const TriMesh& mesh) {
  double best = 180.0;
  for (int t = 0; t < mesh.num_triangles(); ++t) best = std::min(best, min_angle_deg(mesh, t));
  return best;
}

namespace detail {

inline bool on_line(double v, double line) { return std::abs(v - line) <= 1e-12; }

inline EdgeTag classify_boundary_edge(const Vec2& a, const Vec2& b, const Rect& box) {
  if (on_line(a.x(), box.x0) && on_line(b.x(), box.x0)) return EdgeTag::Left;
  if (on_line(a.x(), box.x1) && on_line(b.x(), box.x1)) return EdgeTag::Right;
  if (on_line(a.y(), box.y0) && on_line(b.y(), box.y0)) return EdgeTag::Bottom;
  if (on_line(a.y(), box.y1) && on_line(b.y(), box.y1)) return EdgeTag::Top;
  return EdgeTag::Obstacle;
}

/// Matches every vertex on `from_tag` edges with the vertex shifted by `shift`.
inline void match_side(TriMesh& mesh, EdgeTag from_tag, EdgeTag to_tag, const Vec2& shift) {
  const auto from = mesh.vertices_with_tag(from_tag);
  const auto to = mesh.vertices_with_tag(to_tag);
  require(from.size() == to.size(), ErrorCode::MissingPairs,
          std::string("periodic traces differ in vertex count on ") +
              std::string(to_string(from_tag)) + "/" + std::string(to_string(to_tag)));
  // Opposite sides share one coordinate ordering, so sort both by the free coordinate.
  const bool vertical = shift.x() != 0.0;
  auto key = [&](int v) { return vertical ? mesh.vertices[v].y() : mesh.vertices[v].x(); };
  auto sorted_from = from;
  auto sorted_to = to;
  std::sort(sorted_from.begin(), sorted_from.end(), [&](int a, int b) { return key(a) < key(b); });
  std::sort(sorted_to.begin(), sorted_to.end(), [&](int a, int b) { return key(a) < key(b); });
  for (std::size_t i = 0; i < sorted_from.size(); ++i) {
    const Vec2 gap = mesh.vertices[sorted_to[i]] - mesh.vertices[sorted_from[i]] - shift;
    require(gap.norm() <= 1e-12, ErrorCode::MissingPairs,
            "periodic traces are not mirror-matched");
    mesh.periodic_pairs.emplace_back(sorted_from[i], sorted_to[i]);
  }
}

}  // namespace detail

/// Orients triangles, builds the edge table and tags, and (optionally) periodic pairs.
/// `preset_tags` overrides the positional classification for listed boundary edges.
inline TriMesh finalize_mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 3>> triangles,
                             const Rect& box, double h, bool periodic,
                             const std::map<std::pair<int, int>, EdgeTag>& preset_tags = {}) {
  TriMesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.triangles = std::move(triangles);
  mesh.box = box;
  mesh.h = h;

  for (int t = 0; t < mesh.num_triangles(); ++t) {
    for (int v : mesh.triangles[t])
      require(v >= 0 && v < mesh.num_vertices(), ErrorCode::MeshFormat,
              "triangle references a missing vertex");
    const double area = mesh.signed_area(t);
    require(std::abs(area) > 1e-14, ErrorCode::MeshingFailed, "degenerate triangle produced");
    if (area < 0) std::swap(mesh.triangles[t][1], mesh.triangles[t][2]);
  }

  std::map<std::pair<int, int>, int> index;
  std::vector<int> uses;
  mesh.triangle_edges.resize(mesh.triangles.size());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    for (int k = 0; k < 3; ++k) {
      int a = tri[(k + 1) % 3];
      int b = tri[(k + 2) % 3];
      if (a > b) std::swap(a, b);
      auto [it, inserted] = index.try_emplace({a, b}, mesh.num_edges());
      if (inserted) {
        mesh.edges.push_back({a, b});
        uses.push_back(0);
      }
      ++uses[it->second];
      mesh.triangle_edges[t][k] = it->second;
    }
  }

  mesh.edge_tags.resize(mesh.edges.size(), EdgeTag::Interior);
  for (int e = 0; e < mesh.num_edges(); ++e) {
    require(uses[e] <= 2, ErrorCode::MeshingFailed, "non-manifold edge shared by >2 triangles");
    if (uses[e] == 2) continue;
    const auto [a, b] = mesh.edges[e];
    auto preset = preset_tags.find({a, b});
    mesh.edge_tags[e] = preset != preset_tags.end()
                            ? preset->second
                            : detail::classify_boundary_edge(mesh.vertices[a], mesh.vertices[b], box);
  }

  if (periodic) {
    detail::match_side(mesh, EdgeTag::Left, EdgeTag::Right, {box.width(), 0.0});
    detail::match_side(mesh, EdgeTag::Bottom, EdgeTag::Top, {0.0, box.height()});
  }
  return mesh;
}

/// Checks the structural invariants of a mesh; returns the number of obstacle loops.
inline int check_mesh_invariants(const TriMesh& mesh, const MeshOptions& options = {}) {
  for (int t = 0; t < mesh.num_triangles(); ++t)
    require(mesh.signed_area(t) > 0, ErrorCode::MeshingFailed, "triangle with non-positive area");
  const double angle = min_angle_deg(mesh);
  require(angle > options.min_angle_deg, ErrorCode::MeshingFailed,
          "minimum angle " + std::to_string(angle) + " deg below quality floor");

  // Obstacle edges must close into loops: every obstacle vertex has degree two.
  std::map<int, std::vector<int>> adjacency;
  for (int e : mesh.edges_with_tag(EdgeTag::Obstacle)) {
    adjacency[mesh.edges[e][0]].push_back(mesh.edges[e][1]);
    adjacency[mesh.edges[e][1]].push_back(mesh.edges[e][0]);
  }
  for (const auto& [v, nbrs] : adjacency)
    require(nbrs.size() == 2, ErrorCode::MeshingFailed, "obstacle boundary is not a closed loop");
  int loops = 0;
  std::map<int, bool> seen;
  for (const auto& [start, nbrs] : adjacency) {
    if (seen[start]) continue;
    ++loops;
    std::vector<int> stack{start};
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      if (seen[v]) continue;
      seen[v] = true;
      for (int w : adjacency[v])
        if (!seen[w]) stack.push_back(w);
    }
  }

  for (const auto& [a, b] : mesh.periodic_pairs) {
    const Vec2 d = mesh.vertices[b] - mesh.vertices[a];
    const bool horizontal = std::abs(d.x() - mesh.box.width()) <= 1e-12 && std::abs(d.y()) <= 1e-12;
    const bool vertical = std::abs(d.y() - mesh.box.height()) <= 1e-12 && std::abs(d.x()) <= 1e-12;
    require(horizontal || vertical, ErrorCode::MissingPairs, "periodic pair is not a lattice shift");
  }
  return loops;
}

namespace detail {

/// Breakpoints refined so that no piece exceeds h; the total piece count is made even
/// (by splitting the longest interval once more) so the cell centre is a grid line.
inline std::vector<double> graded_axis(std::vector<double> breaks, double h) {
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  std::vector<int> counts;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double len = breaks[i + 1] - breaks[i];
    counts.push_back(std::max(1, static_cast<int>(std::ceil(len / h - 1e-9))));
  }
  int total = 0;
  for (int c : counts) total += c;
  if (total % 2 == 1) {
    std::size_t longest = 0;
    for (std::size_t i = 1; i < counts.size(); ++i)
      if (breaks[i + 1] - breaks[i] > breaks[longest + 1] - breaks[longest] + 1e-12) longest = i;
    ++counts[longest];
  }
  std::vector<double> axis{breaks.front()};
  for (std::size_t i = 0; i < counts.size(); ++i) {
    for (int k = 1; k < counts[i]; ++k)
      axis.push_back(breaks[i] + (breaks[i + 1] - breaks[i]) * k / counts[i]);
    axis.push_back(breaks[i + 1]);
  }
  return axis;
}

/// Tensor-product grid, each cell split along the diagonal that points at the box centre
/// (union-jack pattern, symmetric under both mid-line reflections). Cells whose centre
/// satisfies `drop` are removed.
template <class Drop>
TriMesh tensor_grid_mesh(const std::vector<double>& xs, const std::vector<double>& ys,
                         const Rect& box, double h, bool periodic, Drop drop) {
  const int nx = static_cast<int>(xs.size());
  const int ny = static_cast<int>(ys.size());
  std::vector<int> remap(nx * ny, -1);
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;
  auto vid = [&](int i, int j) {
    int& slot = remap[j * nx + i];
    if (slot < 0) {
      slot = static_cast<int>(vertices.size());
      vertices.emplace_back(xs[i], ys[j]);
    }
    return slot;
  };
  const double mx = 0.5 * (box.x0 + box.x1);
  const double my = 0.5 * (box.y0 + box.y1);
  for (int j = 0; j + 1 < ny; ++j) {
    for (int i = 0; i + 1 < nx; ++i) {
      const Vec2 c(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1]));
      if (drop(c)) continue;
      const int v00 = vid(i, j), v10 = vid(i + 1, j), v11 = vid(i + 1, j + 1), v01 = vid(i, j + 1);
      if ((c.x() - mx) * (c.y() - my) >= 0) {
        triangles.push_back({v00, v10, v11});
        triangles.push_back({v00, v11, v01});
      } else {
        triangles.push_back({v00, v10, v01});
        triangles.push_back({v10, v11, v01});
      }
    }
  }
  return finalize_mesh(std::move(vertices), std::move(triangles), box, h, periodic);
}

/// Cell minus a disk: four sectors between the disk and the cell sides, each meshed with
/// radial lines through uniformly spaced side points and layered quads split at their centre.
inline TriMesh disk_cell_mesh(const Geometry& g, double h) {
  int per_side = std::max(2, static_cast<int>(std::ceil(1.0 / h - 1e-9)));
  if (per_side % 2) ++per_side;
  std::vector<double> t(per_side + 1);
  for (int i = 0; i <= per_side; ++i) t[i] = static_cast<double>(i) / per_side;

  const int ring = 4 * per_side;
  std::vector<Vec2> side(ring);
  for (int i = 0; i < per_side; ++i) {
    side[i] = {t[i], 0.0};                                // bottom, left to right
    side[per_side + i] = {1.0, t[i]};                     // right, bottom to top
    side[2 * per_side + i] = {t[per_side - i], 1.0};      // top, right to left
    side[3 * per_side + i] = {0.0, t[per_side - i]};      // left, top to bottom
  }
  std::vector<Vec2> arc(ring);
  double longest = 0.0;
  for (int k = 0; k < ring; ++k) {
    const Vec2 d = side[k] - g.center;
    arc[k] = g.center + g.radius * d / d.norm();
    longest = std::max(longest, (side[k] - arc[k]).norm());
  }
  const int layers = std::max(1, static_cast<int>(std::ceil(longest / h - 1e-9)));

  std::vector<Vec2> vertices;
  vertices.reserve(ring * (layers + 1) + ring * layers);
  auto grid_id = [&](int k, int j) { return ((k % ring) * (layers + 1)) + j; };
  for (int k = 0; k < ring; ++k)
    for (int j = 0; j <= layers; ++j) {
      const double s = static_cast<double>(j) / layers;
      vertices.push_back(j == layers ? side[k] : arc[k] + s * (side[k] - arc[k]));
    }
  std::vector<std::array<int, 3>> triangles;
  triangles.reserve(4 * ring * layers);
  for (int k = 0; k < ring; ++k) {
    for (int j = 0; j < layers; ++j) {
      const int a = grid_id(k, j), b = grid_id(k + 1, j), c = grid_id(k + 1, j + 1),
                d = grid_id(k, j + 1);
      const int m = static_cast<int>(vertices.size());
      vertices.push_back(0.25 * (vertices[a] + vertices[b] + vertices[c] + vertices[d]));
      triangles.push_back({a, b, m});
      triangles.push_back({b, c, m});
      triangles.push_back({c, d, m});
      triangles.push_back({d, a, m});
    }
  }
  return finalize_mesh(std::move(vertices), std::move(triangles), kUnitCell, h, true);
}

}  // namespace detail

inline TriMesh read_mesh_file(const std::string& path, const Rect& box, bool periodic);

/// Periodic, mirror-matched triangulation of the fluid part of the unit cell.
inline TriMesh build_cell_mesh(const Geometry& geometry, double h, const MeshOptions& options = {}) {
  require(h > 0, ErrorCode::Precondition, "mesh size h must be positive");
  geometry.validate();

  TriMesh mesh;
  switch (geometry.kind) {
    case GeometryKind::Full: {
      const auto axis = detail::graded_axis({0.0, 1.0}, h);
      mesh = detail::tensor_grid_mesh(axis, axis, kUnitCell, h, true, [](const Vec2&) { return false; });
      break;
    }
    case GeometryKind::TwoRects: {
      std::vector<double> bx{0.0, 1.0}, by{0.0, 1.0};
      for (const Rect& r : geometry.rects) {
        bx.insert(bx.end(), {r.x0, r.x1});
        by.insert(by.end(), {r.y0, r.y1});
      }
      mesh = detail::tensor_grid_mesh(detail::graded_axis(bx, h), detail::graded_axis(by, h),
                                      kUnitCell, h, true,
                                      [&](const Vec2& c) { return geometry.in_obstacle(c); });
      break;
    }
    case GeometryKind::Disk:
      mesh = detail::disk_cell_mesh(geometry, h);
      break;
    case GeometryKind::Custom:
      mesh = read_mesh_file(geometry.mesh_file, kUnitCell, true);
      mesh.h = h;
      break;
  }

  const int loops = check_mesh_invariants(mesh, options);
  if (geometry.kind == GeometryKind::Disk) {
    require(loops == 1, ErrorCode::MeshingFailed, "disk obstacle must give one boundary loop");
    for (int v : mesh.vertices_with_tag(EdgeTag::Obstacle))
      require(std::abs((mesh.vertices[v] - geometry.center).norm() - geometry.radius) < 1e-9,
              ErrorCode::MeshingFailed, "obstacle vertex off the disk boundary");
  }
  if (geometry.kind == GeometryKind::TwoRects) {
    for (int v : mesh.vertices_with_tag(EdgeTag::Obstacle))
      require(geometry.in_obstacle(mesh.vertices[v]), ErrorCode::MeshingFailed,
              "obstacle vertex off the rectangle boundary");
  }
  if (geometry.kind == GeometryKind::Full)
    require(loops == 0, ErrorCode::MeshingFailed, "full cell must have no obstacle edges");
  return mesh;
}

/// Structured union-jack triangulation of a rectangle with n1 x n2 grid nodes.
inline TriMesh build_macro_mesh(const Rect& domain, int n1, int n2) {
  require(n1 >= 2 && n2 >= 2, ErrorCode::Precondition, "macro mesh needs at least 2 nodes per axis");
  require(domain.width() > 0 && domain.height() > 0, ErrorCode::Precondition,
          "macro domain must have positive extent");
  std::vector<double> xs(n1), ys(n2);
  for (int i = 0; i < n1; ++i) xs[i] = domain.x0 + domain.width() * i / (n1 - 1);
  for (int j = 0; j < n2; ++j) ys[j] = domain.y0 + domain.height() * j / (n2 - 1);
  xs.back() = domain.x1;
  ys.back() = domain.y1;
  const double h = std::hypot(domain.width() / (n1 - 1), domain.height() / (n2 - 1));
  return detail::tensor_grid_mesh(xs, ys, domain, h, false, [](const Vec2&) { return false; });
}

}  // namespace twoscale

#include "twoscale/mesh_io.hpp"
