#include "nbv/mesh_factory.hpp"

#include <cmath>
#include <map>

namespace nbv {

TriangleMesh make_box(const Vec3& lo, const Vec3& hi) {
  TriangleMesh m;
  m.vertices = {
      {lo.x(), lo.y(), lo.z()}, {hi.x(), lo.y(), lo.z()}, {hi.x(), hi.y(), lo.z()},
      {lo.x(), hi.y(), lo.z()}, {lo.x(), lo.y(), hi.z()}, {hi.x(), lo.y(), hi.z()},
      {hi.x(), hi.y(), hi.z()}, {lo.x(), hi.y(), hi.z()}};
  m.triangles = {
      {0, 2, 1}, {0, 3, 2},  // -z
      {4, 5, 6}, {4, 6, 7},  // +z
      {0, 1, 5}, {0, 5, 4},  // -y
      {2, 3, 7}, {2, 7, 6},  // +y
      {1, 2, 6}, {1, 6, 5},  // +x
      {3, 0, 4}, {3, 4, 7},  // -x
  };
  return m;
}

TriangleMesh make_icosphere(double radius, int subdivisions) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {
      {-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
      {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
      {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1}};
  std::vector<Vec3i> tris = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (Vec3& v : verts) v.normalize();

  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      const auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      verts.push_back(((verts[a] + verts[b]) * 0.5).normalized());
      const int idx = static_cast<int>(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Vec3i> next;
    next.reserve(tris.size() * 4);
    for (const Vec3i& t : tris) {
      const int ab = mid(t.x(), t.y()), bc = mid(t.y(), t.z()), ca = mid(t.z(), t.x());
      next.push_back({t.x(), ab, ca});
      next.push_back({t.y(), bc, ab});
      next.push_back({t.z(), ca, bc});
      next.push_back({ab, bc, ca});
    }
    tris = std::move(next);
  }

  TriangleMesh m;
  m.vertices.reserve(verts.size());
  for (const Vec3& v : verts) m.vertices.push_back(radius * v);
  m.triangles = std::move(tris);
  return m;
}

TriangleMesh merge_meshes(const std::vector<TriangleMesh>& parts) {
  TriangleMesh out;
  for (const TriangleMesh& p : parts) {
    const int base = static_cast<int>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), p.vertices.begin(), p.vertices.end());
    for (const Vec3i& t : p.triangles)
      out.triangles.push_back(t + Vec3i::Constant(base));
  }
  return out;
}

TriangleMesh make_lshape() {
  return merge_meshes({make_box({0, 0, 0}, {1.0, 0.5, 0.5}),
                       make_box({0, 0.5, 0}, {0.5, 1.0, 0.5})});
}

TriangleMesh make_torus(double major_radius, double minor_radius, int major_segments,
                        int minor_segments) {
  TriangleMesh m;
  m.vertices.reserve(static_cast<std::size_t>(major_segments) * minor_segments);
  for (int i = 0; i < major_segments; ++i) {
    const double u = 2.0 * EIGEN_PI * i / major_segments;
    const Vec3 ring(std::cos(u), std::sin(u), 0.0);
    for (int j = 0; j < minor_segments; ++j) {
      const double v = 2.0 * EIGEN_PI * j / minor_segments;
      const Vec3 p = (major_radius + minor_radius * std::cos(v)) * ring +
                     Vec3(0, 0, minor_radius * std::sin(v));
      m.vertices.push_back(p);
    }
  }
  auto vid = [&](int i, int j) {
    return (i % major_segments) * minor_segments + (j % minor_segments);
  };
  for (int i = 0; i < major_segments; ++i) {
    for (int j = 0; j < minor_segments; ++j) {
      const int a = vid(i, j), b = vid(i + 1, j), c = vid(i + 1, j + 1), d = vid(i, j + 1);
      m.triangles.push_back({a, b, c});
      m.triangles.push_back({a, c, d});
    }
  }
  return m;
}

namespace {

// Gable (triangular prism) roof over x in [x0,x1], y in [y0,y1]; eaves at
// base_z, ridge along x at ridge_z, y centered. Closed solid including the
// flat underside, so the overhang soffit faces downward.
TriangleMesh make_gable(double x0, double x1, double y0, double y1, double base_z,
                        double ridge_z) {
  const double ym = 0.5 * (y0 + y1);
  TriangleMesh m;
  m.vertices = {{x0, y0, base_z}, {x1, y0, base_z}, {x1, y1, base_z}, {x0, y1, base_z},
                {x0, ym, ridge_z}, {x1, ym, ridge_z}};
  m.triangles = {
      {0, 1, 5}, {0, 5, 4},  // -y roof slope
      {2, 3, 4}, {2, 4, 5},  // +y roof slope
      {0, 4, 3},             // -x gable end
      {1, 2, 5},             // +x gable end
      {0, 2, 1}, {0, 3, 2},  // underside (soffit)
  };
  return m;
}

}  // namespace

TriangleMesh make_house_gable() {
  // Body 0.9 x 0.6 x 0.45 with a roof overhanging 0.15 on every side.
  const TriangleMesh body = make_box({0, 0, 0}, {0.9, 0.6, 0.45});
  const TriangleMesh roof = make_gable(-0.15, 1.05, -0.15, 0.75, 0.45, 0.78);
  return merge_meshes({body, roof});
}

TriangleMesh make_house_canopy() {
  // Slab-roofed body plus a freestanding canopy on two columns; the canopy
  // underside and the sheltered wall strip need low viewpoints.
  const TriangleMesh body = make_box({0, 0, 0}, {0.8, 0.55, 0.5});
  const TriangleMesh roof = make_box({-0.18, -0.18, 0.5}, {0.98, 0.73, 0.58});
  const TriangleMesh canopy = make_box({0.8, 0.1, 0.32}, {1.15, 0.45, 0.38});
  const TriangleMesh col_a = make_box({1.04, 0.13, 0.0}, {1.1, 0.19, 0.32});
  const TriangleMesh col_b = make_box({1.04, 0.36, 0.0}, {1.1, 0.42, 0.32});
  return merge_meshes({body, roof, canopy, col_a, col_b});
}

std::vector<BenchMesh> benchmark_meshes() {
  std::vector<BenchMesh> out;
  out.push_back({"cube", make_box(Vec3::Zero(), Vec3::Ones())});
  out.push_back({"icosphere", make_icosphere(1.0, 3)});
  out.push_back({"lshape", make_lshape()});
  // Standing torus (hole open sideways): every inner face stays observable
  // from admissible camera heights.
  TriangleMesh torus = make_torus(0.375, 0.125, 48, 24);
  for (Vec3& v : torus.vertices) v = Vec3(v.x(), -v.z(), v.y());
  out.push_back({"torus", std::move(torus)});
  out.push_back({"house_gable", make_house_gable()});
  out.push_back({"house_canopy", make_house_canopy()});
  return out;
}

}  // namespace nbv
