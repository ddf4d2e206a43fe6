#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "nbv/mesh.hpp"
#include "nbv/mesh_factory.hpp"
#include "nbv/util.hpp"

using namespace nbv;

namespace {

std::filesystem::path tmp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "nbv_mesh_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::filesystem::path write_file(const std::string& name, const std::string& content) {
  const auto p = tmp_file(name);
  std::ofstream out(p, std::ios::binary);
  out << content;
  return p;
}

double signed_volume(const TriangleMesh& mesh) {
  double v = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Vec3 a = mesh.vertex(static_cast<int>(t), 0);
    const Vec3 b = mesh.vertex(static_cast<int>(t), 1);
    const Vec3 c = mesh.vertex(static_cast<int>(t), 2);
    v += a.dot(b.cross(c)) / 6.0;
  }
  return v;
}

// Closed orientable 2-manifold: every directed edge appears exactly once and
// its reverse appears exactly once.
bool is_closed_manifold(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> directed;
  for (const Vec3i& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) ++directed[{t[e], t[(e + 1) % 3]}];
  for (const auto& [edge, count] : directed) {
    if (count != 1) return false;
    const auto rev = directed.find({edge.second, edge.first});
    if (rev == directed.end() || rev->second != 1) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("obj: quads fan-triangulate, comments and normals ignored") {
  const auto p = write_file("quad.obj",
                            "# unit square\n"
                            "v 0 0 0\n"
                            "v 1 0 0\n"
                            "v 1 1 0\n"
                            "v 0 1 0\n"
                            "vn 0 0 1\n"
                            "f 1//1 2//1 3//1 4//1\n");
  const TriangleMesh m = load_mesh(p.string());
  REQUIRE(m.vertices.size() == 4);
  REQUIRE(m.triangles.size() == 2);
  CHECK(m.triangles[0] == Vec3i(0, 1, 2));
  CHECK(m.triangles[1] == Vec3i(0, 2, 3));
  CHECK(triangle_normal(m, 0) == Vec3(0, 0, 1));
}

TEST_CASE("obj: negative indices are relative to the current vertex count") {
  const auto p = write_file("neg.obj",
                            "v 0 0 0\nv 1 0 0\nv 0 1 0\n"
                            "f -3 -2 -1\n");
  const TriangleMesh m = load_mesh(p.string());
  REQUIRE(m.triangles.size() == 1);
  CHECK(m.triangles[0] == Vec3i(0, 1, 2));
}

TEST_CASE("obj: malformed inputs raise errors") {
  CHECK_THROWS_AS((void)load_mesh(tmp_file("nope.xyz").string()), Error);
  const auto no_tris = write_file("noface.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\n");
  CHECK_THROWS_AS((void)load_mesh(no_tris.string()), Error);
  const auto oob = write_file("oob.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
  CHECK_THROWS_AS((void)load_mesh(oob.string()), Error);
  const auto nan = write_file("nan.obj", "v nan 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
  CHECK_THROWS_AS((void)load_mesh(nan.string()), Error);
  const auto missing = tmp_file("does_not_exist.obj");
  CHECK_THROWS_AS((void)load_mesh(missing.string()), Error);
}

TEST_CASE("ply: ascii and binary twins load identically") {
  const std::string ascii =
      "ply\n"
      "format ascii 1.0\n"
      "element vertex 4\n"
      "property float x\n"
      "property float y\n"
      "property float z\n"
      "property float confidence\n"
      "element face 1\n"
      "property list uchar int vertex_indices\n"
      "end_header\n"
      "0 0 0 0.5\n"
      "1 0 0 0.5\n"
      "1 1 0 0.5\n"
      "0 1 0 0.5\n"
      "4 0 1 2 3\n";
  const auto pa = write_file("twin.ply", ascii);

  std::string bin =
      "ply\n"
      "format binary_little_endian 1.0\n"
      "element vertex 4\n"
      "property float x\n"
      "property float y\n"
      "property float z\n"
      "property float confidence\n"
      "element face 1\n"
      "property list uchar int vertex_indices\n"
      "end_header\n";
  const float verts[16] = {0, 0, 0, 0.5f, 1, 0, 0, 0.5f, 1, 1, 0, 0.5f, 0, 1, 0, 0.5f};
  bin.append(reinterpret_cast<const char*>(verts), sizeof verts);
  bin.push_back(static_cast<char>(4));
  const std::int32_t idx[4] = {0, 1, 2, 3};
  bin.append(reinterpret_cast<const char*>(idx), sizeof idx);
  const auto pb = write_file("twin_bin.ply", bin);

  const TriangleMesh ma = load_mesh(pa.string());
  const TriangleMesh mb = load_mesh(pb.string());
  REQUIRE(ma.vertices.size() == 4);
  REQUIRE(ma.triangles.size() == 2);
  REQUIRE(mb.vertices.size() == 4);
  REQUIRE(mb.triangles.size() == 2);
  for (int i = 0; i < 4; ++i) CHECK(ma.vertices[i] == mb.vertices[i]);
  for (int i = 0; i < 2; ++i) CHECK(ma.triangles[i] == mb.triangles[i]);
}

TEST_CASE("ply: malformed headers rejected") {
  const auto bad_fmt = write_file("fmt.ply", "ply\nformat big_endian 1.0\nend_header\n");
  CHECK_THROWS_AS((void)load_mesh(bad_fmt.string()), Error);
  const auto no_magic = write_file("magic.ply", "plyx\n");
  CHECK_THROWS_AS((void)load_mesh(no_magic.string()), Error);
  const auto truncated = write_file("trunc.ply",
                                    "ply\nformat ascii 1.0\n"
                                    "element vertex 2\n"
                                    "property float x\nproperty float y\nproperty float z\n"
                                    "end_header\n"
                                    "0 0 0\n");
  CHECK_THROWS_AS((void)load_mesh(truncated.string()), Error);
}

TEST_CASE("save_obj round-trips bit-exactly") {
  TriangleMesh m = make_icosphere(1.2345678901234567, 2);
  const auto p = tmp_file("roundtrip.obj");
  save_obj(p.string(), m);
  const TriangleMesh back = load_mesh(p.string());
  REQUIRE(back.vertices.size() == m.vertices.size());
  REQUIRE(back.triangles.size() == m.triangles.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) CHECK(back.vertices[i] == m.vertices[i]);
  for (std::size_t i = 0; i < m.triangles.size(); ++i)
    CHECK(back.triangles[i] == m.triangles[i]);
}

TEST_CASE("areas and aabb") {
  const TriangleMesh box = make_box(Vec3(1, 2, 3), Vec3(3, 5, 7));
  const Aabb bb = mesh_aabb(box);
  CHECK(bb.lo == Vec3(1, 2, 3));
  CHECK(bb.hi == Vec3(3, 5, 7));
  // 2*(2*3 + 2*4 + 3*4) = 52
  CHECK(mesh_area(box) == doctest::Approx(52.0).epsilon(1e-12));
  CHECK(triangle_area(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)) ==
        doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("normalize_and_place: scale, grounding, horizontal centering") {
  const TriangleMesh m = make_box(Vec3(0, 0, 0), Vec3(1, 1, 4));
  const TriangleMesh placed = normalize_and_place(m, 8.0, Vec2(3.0, -2.0), 1.0);
  const Aabb bb = mesh_aabb(placed);
  CHECK((bb.hi - bb.lo) == Vec3(2, 2, 8));
  CHECK(bb.lo.z() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(0.5 * (bb.lo.x() + bb.hi.x()) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(0.5 * (bb.lo.y() + bb.hi.y()) == doctest::Approx(-2.0).epsilon(1e-12));

  // Idempotent once placed.
  const TriangleMesh again = normalize_and_place(placed, 8.0, Vec2(3.0, -2.0), 1.0);
  for (std::size_t i = 0; i < placed.vertices.size(); ++i)
    CHECK((again.vertices[i] - placed.vertices[i]).norm() < 1e-12);

  TriangleMesh flat;
  flat.vertices = {Vec3(0, 0, 0), Vec3(0, 0, 0), Vec3(0, 0, 0)};
  flat.triangles = {Vec3i(0, 1, 2)};
  CHECK_THROWS_AS((void)normalize_and_place(flat, 8.0, Vec2(0, 0), 1.0), Error);
}

TEST_CASE("sample_surface: area-proportional triangle selection") {
  TriangleMesh m;
  m.vertices = {Vec3(0, 0, 0), Vec3(3, 0, 0),  Vec3(0, 3, 0),
                Vec3(10, 0, 0), Vec3(11, 0, 0), Vec3(10, 1, 0)};
  m.triangles = {Vec3i(0, 1, 2), Vec3i(3, 4, 5)};  // areas 4.5 : 0.5
  const auto samples = sample_surface(m, 10000, 42);
  REQUIRE(samples.size() == 10000);
  int big = 0;
  for (const auto& s : samples)
    if (s.triangle == 0) ++big;
  // Binomial(10000, 0.9), 3.5 sigma.
  CHECK(big >= 8895);
  CHECK(big <= 9105);
}

TEST_CASE("sample_surface: samples lie inside their triangle") {
  const TriangleMesh m = make_icosphere(1.0, 1);
  const auto samples = sample_surface(m, 2000, 9);
  for (const auto& s : samples) {
    const Vec3 a = m.vertex(s.triangle, 0);
    const Vec3 ab = m.vertex(s.triangle, 1) - a;
    const Vec3 ac = m.vertex(s.triangle, 2) - a;
    const Vec3 ap = s.point - a;
    Eigen::Matrix2d gram;
    gram << ab.dot(ab), ab.dot(ac), ac.dot(ab), ac.dot(ac);
    const Eigen::Vector2d rhs(ab.dot(ap), ac.dot(ap));
    const Eigen::Vector2d uv = gram.ldlt().solve(rhs);
    CHECK(uv.x() >= -1e-9);
    CHECK(uv.y() >= -1e-9);
    CHECK(uv.x() + uv.y() <= 1.0 + 1e-9);
    const Vec3 recon = a + uv.x() * ab + uv.y() * ac;
    CHECK((recon - s.point).norm() < 1e-9);
  }
}

TEST_CASE("sample_surface: deterministic per seed") {
  const TriangleMesh m = make_icosphere(1.0, 1);
  const auto a = sample_surface_points(m, 500, 31);
  const auto b = sample_surface_points(m, 500, 31);
  const auto c = sample_surface_points(m, 500, 32);
  REQUIRE(a.size() == b.size());
  bool identical = true;
  for (std::size_t i = 0; i < a.size(); ++i) identical = identical && a[i] == b[i];
  CHECK(identical);
  bool all_same = true;
  for (std::size_t i = 0; i < a.size(); ++i) all_same = all_same && a[i] == c[i];
  CHECK_FALSE(all_same);
}

TEST_CASE("factory: benchmark suite shape and orientation") {
  const auto suite = benchmark_meshes();
  REQUIRE(suite.size() == 6);
  std::set<std::string> names;
  for (const auto& bm : suite) names.insert(bm.name);
  CHECK(names == std::set<std::string>{"cube", "icosphere", "lshape", "torus", "house_gable",
                                       "house_canopy"});
  for (const auto& bm : suite) {
    INFO(bm.name);
    CHECK(mesh_area(bm.mesh) > 0.0);
    CHECK(signed_volume(bm.mesh) > 0.0);  // outward CCW winding
    for (std::size_t t = 0; t < bm.mesh.triangles.size(); ++t)
      CHECK(triangle_normal(bm.mesh, static_cast<int>(t)).norm() ==
            doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("factory: single-solid meshes are closed manifolds") {
  CHECK(is_closed_manifold(make_box(Vec3::Zero(), Vec3::Ones())));
  CHECK(is_closed_manifold(make_icosphere(1.0, 3)));
  CHECK(is_closed_manifold(make_torus(0.375, 0.125, 48, 24)));
  CHECK(signed_volume(make_box(Vec3::Zero(), Vec3::Ones())) == doctest::Approx(1.0));
}

TEST_CASE("factory: icosphere vertices sit on the sphere") {
  const TriangleMesh s = make_icosphere(2.0, 2);
  for (const Vec3& v : s.vertices) CHECK(v.norm() == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("factory: torus in the suite stands upright") {
  const auto suite = benchmark_meshes();
  const auto it = std::find_if(suite.begin(), suite.end(),
                               [](const BenchMesh& b) { return b.name == "torus"; });
  REQUIRE(it != suite.end());
  const Aabb bb = mesh_aabb(it->mesh);
  // Hole axis horizontal: thin along y, full diameter along x and z.
  CHECK(bb.hi.y() - bb.lo.y() == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(bb.hi.x() - bb.lo.x() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(bb.hi.z() - bb.lo.z() == doctest::Approx(1.0).epsilon(1e-9));
}
