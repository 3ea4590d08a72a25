#pragma once

// Plain-text mesh exchange:
//
//   vertices <N>
//   <index> <x> <y>            (N lines)
//   triangles <M>
//   <a> <b> <c>                (M lines)
//   edges <K>
//   <a> <b> <Tag>              (K lines, boundary edges only)

#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "twoscale/mesh.hpp"

namespace twoscale {

inline void write_mesh(std::ostream& out, const TriMesh& mesh) {
  out << std::setprecision(17);
  out << "vertices " << mesh.num_vertices() << '\n';
  for (int v = 0; v < mesh.num_vertices(); ++v)
    out << v << ' ' << mesh.vertices[v].x() << ' ' << mesh.vertices[v].y() << '\n';
  out << "triangles " << mesh.num_triangles() << '\n';
  for (const auto& t : mesh.triangles) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  const auto boundary = [&] {
    std::vector<int> ids;
    for (int e = 0; e < mesh.num_edges(); ++e)
      if (mesh.edge_tags[e] != EdgeTag::Interior) ids.push_back(e);
    return ids;
  }();
  out << "edges " << boundary.size() << '\n';
  for (int e : boundary)
    out << mesh.edges[e][0] << ' ' << mesh.edges[e][1] << ' ' << to_string(mesh.edge_tags[e]) << '\n';
}

namespace detail {

inline std::size_t read_section_header(std::istream& in, const std::string& name) {
  std::string word;
  std::size_t count = 0;
  require(static_cast<bool>(in >> word >> count) && word == name, ErrorCode::MeshFormat,
          "expected section '" + name + " <count>'");
  return count;
}

}  // namespace detail

inline TriMesh read_mesh(std::istream& in, const Rect& box, bool periodic) {
  const std::size_t nv = detail::read_section_header(in, "vertices");
  std::vector<Vec2> vertices(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    std::size_t index = 0;
    double x = 0, y = 0;
    require(static_cast<bool>(in >> index >> x >> y) && index == i, ErrorCode::MeshFormat,
            "bad vertex record " + std::to_string(i));
    vertices[i] = {x, y};
  }
  const std::size_t nt = detail::read_section_header(in, "triangles");
  std::vector<std::array<int, 3>> triangles(nt);
  for (std::size_t i = 0; i < nt; ++i)
    require(static_cast<bool>(in >> triangles[i][0] >> triangles[i][1] >> triangles[i][2]),
            ErrorCode::MeshFormat, "bad triangle record " + std::to_string(i));
  std::map<std::pair<int, int>, EdgeTag> tags;
  std::string word;
  if (in >> word) {
    require(word == "edges", ErrorCode::MeshFormat, "expected section 'edges <count>'");
    std::size_t ne = 0;
    require(static_cast<bool>(in >> ne), ErrorCode::MeshFormat, "missing edge count");
    for (std::size_t i = 0; i < ne; ++i) {
      int a = 0, b = 0;
      std::string tag;
      require(static_cast<bool>(in >> a >> b >> tag), ErrorCode::MeshFormat,
              "bad edge record " + std::to_string(i));
      if (a > b) std::swap(a, b);
      tags[{a, b}] = edge_tag_from_string(tag);
    }
  }
  double h = 0.0;
  for (const auto& t : triangles)
    for (int k = 0; k < 3; ++k)
      if (t[k] >= 0 && t[(k + 1) % 3] >= 0 && static_cast<std::size_t>(std::max(t[k], t[(k + 1) % 3])) < nv)
        h = std::max(h, (vertices[t[k]] - vertices[t[(k + 1) % 3]]).norm());
  return finalize_mesh(std::move(vertices), std::move(triangles), box, h, periodic, tags);
}

inline TriMesh read_mesh_file(const std::string& path, const Rect& box, bool periodic) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open mesh file " + path);
  return read_mesh(in, box, periodic);
}

inline void write_mesh_file(const std::string& path, const TriMesh& mesh) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot write mesh file " + path);
  write_mesh(out, mesh);
}

}  // namespace twoscale
