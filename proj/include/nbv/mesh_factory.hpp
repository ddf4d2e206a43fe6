#pragma once

#include <string>
#include <vector>

#include "nbv/mesh.hpp"

namespace nbv {

// Procedural meshes with consistent outward (CCW) winding. Dimensions are in
// model units; normalize_and_place handles benchmark scaling.

TriangleMesh make_box(const Vec3& lo, const Vec3& hi);
TriangleMesh make_icosphere(double radius, int subdivisions);

// L-shaped prism assembled from two face-touching boxes; the interface is
// interior and gets pruned from the ground truth.
TriangleMesh make_lshape();

// Flat-lying torus (hole axis +z).
TriangleMesh make_torus(double major_radius, double minor_radius, int major_segments,
                        int minor_segments);

// Gable-roofed house; the roof overhangs the walls so the soffit undersides
// require bottom-up views.
TriangleMesh make_house_gable();

// Flat-roofed house with a wide overhang plus a column-supported canopy slab.
TriangleMesh make_house_canopy();

TriangleMesh merge_meshes(const std::vector<TriangleMesh>& parts);

struct BenchMesh {
  std::string name;
  TriangleMesh mesh;
};

// The six-object benchmark suite.
std::vector<BenchMesh> benchmark_meshes();

}  // namespace nbv
