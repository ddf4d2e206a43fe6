#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nbv/mesh.hpp"
#include "nbv/types.hpp"
#include "nbv/voxel_grid.hpp"

namespace nbv {

struct SceneConfig {
  double scene_size = 20.0;     // cubic volume: x,y in [-s/2, s/2], z in [0, s]
  double target_extent = 8.0;   // longest object dimension after normalization
  Vec2 object_center = Vec2::Zero();
  double ground_height = 1.0;   // AABB base height; one voxel of clearance keeps
                                // undersides observable
  void validate() const;        // throws Error on inconsistent values
};

// Conservative surface voxelization (triangle/box SAT). Triangles lying
// exactly in a grid boundary plane are assigned to the voxel on the side
// opposite their winding normal (the solid side) instead of both neighbors.
// Throws Error when the mesh AABB exceeds the frame volume.
std::vector<std::uint8_t> voxelize(const TriangleMesh& mesh, int g, const Vec3& origin,
                                   double voxel_size);

// Exposed for testing: does the triangle overlap the axis-aligned box?
bool triangle_box_overlap(const Vec3& box_center, const Vec3& box_half, const Vec3& a,
                          const Vec3& b, const Vec3& c);

struct VisibleFaces {
  std::vector<FaceMask> faces;  // per voxel, over the full grid
  long total = 0;
};

// Mark voxels sealed off from the exterior as occupied (solid collision
// volume). BFS over non-occupied cells from the grid boundary.
void fill_enclosed(std::vector<std::uint8_t>& occupied, int g);

// Faces of occupied voxels reachable from outside: BFS over non-occupied
// voxels seeded at the grid boundary (6-connectivity). A face is visible
// when its across-neighbor is BFS-reachable or outside the grid.
VisibleFaces prune_invisible(const std::vector<std::uint8_t>& occupied, int g);

struct GroundTruth {
  int g = 0;
  Vec3 origin = Vec3::Zero();
  double voxel_size = 1.0;
  std::vector<std::uint8_t> occupied;
  std::vector<FaceMask> visible_faces;
  long total_visible_faces = 0;
  std::vector<Vec3> surface_points;  // restricted to visible geometry
  Aabb object_box;                   // AABB of the placed mesh

  std::size_t index(const Vec3i& v) const {
    return (static_cast<std::size_t>(v.x()) * g + v.y()) * g + v.z();
  }
  bool in_bounds(const Vec3i& v) const {
    return (v.array() >= 0).all() && (v.array() < g).all();
  }
  Vec3 voxel_center(const Vec3i& v) const {
    return origin + voxel_size * (v.cast<double>() + Vec3::Constant(0.5));
  }
  long occupied_count() const;
};

struct PreparedScene {
  TriangleMesh mesh;  // normalized and placed
  GroundTruth gt;
};

// Full ground-truth pipeline: place the mesh, voxelize, prune, sample the
// surface and keep only samples whose voxel face along the sample normal is
// visible (physically capturable points).
PreparedScene prep_scene(const TriangleMesh& raw_mesh, const SceneConfig& cfg, int g,
                         int n_surface_points, std::uint64_t sample_seed);

// Weighted average of voxel centers holding unseen ground-truth-visible
// faces (weights = unseen-face counts). Throws Error when everything is seen.
Vec3 gt_lookat(const GroundTruth& gt, const std::vector<FaceMask>& seen_faces);

// Cache IO. Binary little-endian: magic "NBVG", u32 version, u8 voxelization
// mode (1 = conservative), i32 g, origin/voxel_size/object_box float64
// fields, g^3 state bytes (occupied/unknown), g^3 visible-face masks, then
// i64 point count and xyz float64 triples.
void save_gt(const std::string& path, const GroundTruth& gt);
GroundTruth load_gt(const std::string& path);  // throws Error on corrupt files

}  // namespace nbv
