#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nbv/types.hpp"

namespace nbv {

class Rng;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3i> triangles;  // CCW winding defines the outward normal

  Vec3 vertex(int tri, int corner) const { return vertices[triangles[tri][corner]]; }
};

Aabb mesh_aabb(const TriangleMesh& mesh);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);
double mesh_area(const TriangleMesh& mesh);

// Geometric (winding) unit normal of a triangle; zero for degenerate ones.
Vec3 triangle_normal(const TriangleMesh& mesh, int tri);

// Loads .obj (v/f lines, n-gons fan-triangulated, v//vn style and negative
// indices accepted) or .ply (ascii / binary_little_endian 1.0). Throws Error
// on unknown extensions, malformed content, non-finite coordinates,
// out-of-range indices, or meshes with no triangles.
TriangleMesh load_mesh(const std::string& path);

void save_obj(const std::string& path, const TriangleMesh& mesh);

// Uniformly scales so the longest AABB extent equals target_extent, then
// translates so the AABB base sits at ground_height and the AABB center is
// horizontally at object_center. Throws Error for degenerate (zero-extent)
// meshes.
TriangleMesh normalize_and_place(const TriangleMesh& mesh, double target_extent,
                                 const Vec2& object_center, double ground_height);

struct SurfaceSample {
  Vec3 point;
  int triangle;
};

// Area-uniform surface sampling: triangles chosen by cumulative-area
// inversion, positions by reflected barycentric coordinates. Deterministic
// for a given seed.
std::vector<SurfaceSample> sample_surface(const TriangleMesh& mesh, int n, std::uint64_t seed);
std::vector<Vec3> sample_surface_points(const TriangleMesh& mesh, int n, std::uint64_t seed);

}  // namespace nbv
