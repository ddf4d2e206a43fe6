#include "nbv/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nbv/util.hpp"

namespace nbv {

Aabb mesh_aabb(const TriangleMesh& mesh) {
  Aabb box;
  for (const Vec3& v : mesh.vertices) box.expand(v);
  return box;
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

double mesh_area(const TriangleMesh& mesh) {
  double s = 0.0;
  for (const Vec3i& t : mesh.triangles)
    s += triangle_area(mesh.vertices[t.x()], mesh.vertices[t.y()], mesh.vertices[t.z()]);
  return s;
}

Vec3 triangle_normal(const TriangleMesh& mesh, int tri) {
  const Vec3 a = mesh.vertex(tri, 0);
  const Vec3 n = (mesh.vertex(tri, 1) - a).cross(mesh.vertex(tri, 2) - a);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::Zero();
}

namespace {

void check_mesh(TriangleMesh& mesh, const std::string& path) {
  if (mesh.triangles.empty()) throw Error(path + ": mesh has no triangles");
  for (const Vec3& v : mesh.vertices)
    if (!v.allFinite()) throw Error(path + ": non-finite vertex coordinate");
  const int n = static_cast<int>(mesh.vertices.size());
  for (const Vec3i& t : mesh.triangles)
    if ((t.array() < 0).any() || (t.array() >= n).any())
      throw Error(path + ": triangle index out of range");
}

int parse_obj_index(std::string_view token, int vertex_count, const std::string& path) {
  const auto slash = token.find('/');
  if (slash != std::string_view::npos) token = token.substr(0, slash);
  int idx = 0;
  const auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), idx);
  if (ec != std::errc() || p != token.data() + token.size() || idx == 0)
    throw Error(path + ": bad face index '" + std::string(token) + "'");
  if (idx < 0) idx += vertex_count;  // relative indexing
  else idx -= 1;
  if (idx < 0 || idx >= vertex_count) throw Error(path + ": face index out of range");
  return idx;
}

TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(path + ": cannot open");
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key) || key[0] == '#') continue;
    if (key == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) throw Error(path + ": malformed vertex line");
      mesh.vertices.push_back(v);
    } else if (key == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok)
        poly.push_back(parse_obj_index(tok, static_cast<int>(mesh.vertices.size()), path));
      if (poly.size() < 3) throw Error(path + ": face with fewer than 3 vertices");
      for (std::size_t i = 1; i + 1 < poly.size(); ++i)
        mesh.triangles.push_back(Vec3i(poly[0], poly[i], poly[i + 1]));
    }
    // All other keywords (vn, vt, o, g, s, usemtl, ...) are ignored.
  }
  check_mesh(mesh, path);
  return mesh;
}

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

PlyType ply_parse_type(const std::string& s, const std::string& path) {
  if (s == "char" || s == "int8") return PlyType::i8;
  if (s == "uchar" || s == "uint8") return PlyType::u8;
  if (s == "short" || s == "int16") return PlyType::i16;
  if (s == "ushort" || s == "uint16") return PlyType::u16;
  if (s == "int" || s == "int32") return PlyType::i32;
  if (s == "uint" || s == "uint32") return PlyType::u32;
  if (s == "float" || s == "float32") return PlyType::f32;
  if (s == "double" || s == "float64") return PlyType::f64;
  throw Error(path + ": unsupported ply property type '" + s + "'");
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
};

struct PlyElement {
  std::string name;
  long count = 0;
  std::vector<PlyProperty> properties;
};

double ply_read_binary(std::istream& in, PlyType t, const std::string& path) {
  auto read = [&](auto v) -> double {
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw Error(path + ": truncated binary payload");
    return static_cast<double>(v);
  };
  switch (t) {
    case PlyType::i8: return read(std::int8_t{});
    case PlyType::u8: return read(std::uint8_t{});
    case PlyType::i16: return read(std::int16_t{});
    case PlyType::u16: return read(std::uint16_t{});
    case PlyType::i32: return read(std::int32_t{});
    case PlyType::u32: return read(std::uint32_t{});
    case PlyType::f32: return read(float{});
    case PlyType::f64: return read(double{});
  }
  throw Error(path + ": bad ply type");
}

double ply_read_ascii(std::istream& in, const std::string& path) {
  double v;
  if (!(in >> v)) throw Error(path + ": truncated ascii payload");
  return v;
}

TriangleMesh load_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line) || (line != "ply" && line != "ply\r"))
    throw Error(path + ": missing ply magic");

  bool binary = false;
  bool format_seen = false;
  std::vector<PlyElement> elements;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "comment" || key == "obj_info" || key.empty()) continue;
    if (key == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt == "ascii")
        binary = false;
      else if (fmt == "binary_little_endian")
        binary = true;
      else
        throw Error(path + ": unsupported ply format '" + fmt + "'");
      format_seen = true;
    } else if (key == "element") {
      PlyElement e;
      if (!(ls >> e.name >> e.count)) throw Error(path + ": malformed element line");
      elements.push_back(e);
    } else if (key == "property") {
      if (elements.empty()) throw Error(path + ": property before element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        std::string ct, vt;
        if (!(ls >> ct >> vt >> p.name)) throw Error(path + ": malformed list property");
        p.is_list = true;
        p.count_type = ply_parse_type(ct, path);
        p.type = ply_parse_type(vt, path);
      } else {
        p.type = ply_parse_type(t, path);
        if (!(ls >> p.name)) throw Error(path + ": malformed property line");
      }
      elements.back().properties.push_back(p);
    } else if (key == "end_header") {
      break;
    } else {
      throw Error(path + ": unknown header keyword '" + key + "'");
    }
  }
  if (!format_seen) throw Error(path + ": header missing format line");

  auto read_value = [&](PlyType t) {
    return binary ? ply_read_binary(in, t, path) : ply_read_ascii(in, path);
  };

  TriangleMesh mesh;
  for (const PlyElement& e : elements) {
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    for (long i = 0; i < e.count; ++i) {
      Vec3 v = Vec3::Zero();
      for (const PlyProperty& p : e.properties) {
        if (p.is_list) {
          const long n = static_cast<long>(read_value(p.count_type));
          std::vector<long> items(static_cast<std::size_t>(std::max<long>(n, 0)));
          for (long k = 0; k < n; ++k) items[k] = static_cast<long>(read_value(p.type));
          if (is_face && (p.name == "vertex_indices" || p.name == "vertex_index")) {
            if (n < 3) throw Error(path + ": face with fewer than 3 vertices");
            for (long k = 1; k + 1 < n; ++k)
              mesh.triangles.push_back(Vec3i(static_cast<int>(items[0]),
                                             static_cast<int>(items[k]),
                                             static_cast<int>(items[k + 1])));
          }
        } else {
          const double x = read_value(p.type);
          if (is_vertex) {
            if (p.name == "x") v.x() = x;
            else if (p.name == "y") v.y() = x;
            else if (p.name == "z") v.z() = x;
          }
        }
      }
      if (is_vertex) mesh.vertices.push_back(v);
    }
  }
  check_mesh(mesh, path);
  return mesh;
}

}  // namespace

TriangleMesh load_mesh(const std::string& path) {
  auto dot = path.find_last_of('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (ext == "obj") return load_obj(path);
  if (ext == "ply") return load_ply(path);
  throw Error(path + ": unsupported mesh extension '" + ext + "'");
}

void save_obj(const std::string& path, const TriangleMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw Error(path + ": cannot open for writing");
  for (const Vec3& v : mesh.vertices)
    out << "v " << format_double(v.x()) << ' ' << format_double(v.y()) << ' '
        << format_double(v.z()) << '\n';
  for (const Vec3i& t : mesh.triangles)
    out << "f " << t.x() + 1 << ' ' << t.y() + 1 << ' ' << t.z() + 1 << '\n';
  if (!out) throw Error(path + ": write failed");
}

TriangleMesh normalize_and_place(const TriangleMesh& mesh, double target_extent,
                                 const Vec2& object_center, double ground_height) {
  if (!(target_extent > 0.0)) throw Error("normalize_and_place: target_extent must be positive");
  const Aabb box = mesh_aabb(mesh);
  if (!box.valid()) throw Error("normalize_and_place: empty mesh");
  const double longest = box.extent().maxCoeff();
  if (!(longest > 0.0)) throw Error("normalize_and_place: degenerate mesh extent");
  const double s = target_extent / longest;
  const Vec3 center = box.center();
  const Vec3 t(object_center.x() - s * center.x(), object_center.y() - s * center.y(),
               ground_height - s * box.lo.z());
  TriangleMesh out = mesh;
  for (Vec3& v : out.vertices) v = s * v + t;
  return out;
}

std::vector<SurfaceSample> sample_surface(const TriangleMesh& mesh, int n, std::uint64_t seed) {
  if (n < 0) throw Error("sample_surface: negative sample count");
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const Vec3i& t = mesh.triangles[i];
    total += triangle_area(mesh.vertices[t.x()], mesh.vertices[t.y()], mesh.vertices[t.z()]);
    cumulative[i] = total;
  }
  if (!(total > 0.0)) throw Error("sample_surface: mesh has zero surface area");

  Rng rng(seed);
  std::vector<SurfaceSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    const int tri = static_cast<int>(std::min<std::size_t>(
        it - cumulative.begin(), cumulative.size() - 1));
    double r1 = rng.uniform(), r2 = rng.uniform();
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const Vec3 a = mesh.vertex(tri, 0), b = mesh.vertex(tri, 1), c = mesh.vertex(tri, 2);
    out.push_back({a + r1 * (b - a) + r2 * (c - a), tri});
  }
  return out;
}

std::vector<Vec3> sample_surface_points(const TriangleMesh& mesh, int n, std::uint64_t seed) {
  std::vector<Vec3> pts;
  pts.reserve(n);
  for (const SurfaceSample& s : sample_surface(mesh, n, seed)) pts.push_back(s.point);
  return pts;
}

}  // namespace nbv
