#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nbv/types.hpp"

namespace nbv {

struct DepthImage;
struct Intrinsics;
struct Pose;

enum class VoxelState : std::uint8_t { unknown = 0, free = 1, occupied = 2 };

// Cubic g^3 occupancy belief over the scene volume. Per voxel: a state byte
// and a 6-bit cumulative seen-face mask (face order 0:+x 1:-x 2:+y 3:-y
// 4:+z 5:-z). Linear index is (i*g + j)*g + k with k fastest, so ascending
// index order equals lexicographic (i, j, k) order.
class VoxelGrid {
 public:
  VoxelGrid() = default;
  VoxelGrid(int g, const Vec3& origin, double voxel_size);

  int g() const { return g_; }
  const Vec3& origin() const { return origin_; }
  double voxel_size() const { return voxel_size_; }
  std::size_t size() const { return states_.size(); }

  bool in_bounds(const Vec3i& v) const {
    return (v.array() >= 0).all() && (v.array() < g_).all();
  }
  std::size_t index(const Vec3i& v) const {
    return (static_cast<std::size_t>(v.x()) * g_ + v.y()) * g_ + v.z();
  }
  Vec3i unindex(std::size_t idx) const {
    const int k = static_cast<int>(idx % g_);
    const int j = static_cast<int>((idx / g_) % g_);
    const int i = static_cast<int>(idx / (static_cast<std::size_t>(g_) * g_));
    return Vec3i(i, j, k);
  }

  VoxelState state(const Vec3i& v) const { return states_[index(v)]; }
  VoxelState state(std::size_t idx) const { return states_[idx]; }
  void set_state(const Vec3i& v, VoxelState s) { states_[index(v)] = s; }
  void set_state(std::size_t idx, VoxelState s) { states_[idx] = s; }

  FaceMask faces(const Vec3i& v) const { return faces_[index(v)]; }
  FaceMask faces(std::size_t idx) const { return faces_[idx]; }
  void set_faces(std::size_t idx, FaceMask m) { faces_[idx] = m; }

  Vec3 voxel_center(const Vec3i& v) const {
    return origin_ + voxel_size_ * (v.cast<double>() + Vec3::Constant(0.5));
  }
  Vec3 voxel_center(std::size_t idx) const { return voxel_center(unindex(idx)); }

  // Normalized voxel-center coordinates in (0,1)^3, strictly monotone per axis.
  Vec3 pos_enc(const Vec3i& v) const {
    return (v.cast<double>() + Vec3::Constant(0.5)) / static_cast<double>(g_);
  }

  long seen_face_total() const;

  const std::vector<VoxelState>& states() const { return states_; }
  const std::vector<FaceMask>& face_masks() const { return faces_; }

 private:
  int g_ = 0;
  Vec3 origin_ = Vec3::Zero();
  double voxel_size_ = 1.0;
  std::vector<VoxelState> states_;
  std::vector<FaceMask> faces_;
};

// Voxel containing p, or nullopt when p lies outside the grid volume.
std::optional<Vec3i> world_to_voxel(const VoxelGrid& grid, const Vec3& p);

struct IntegrateResult {
  long newly_seen_faces = 0;       // face bits flipped 0 -> 1 by this call
  long newly_occupied = 0;         // voxels newly marked occupied
  long skipped_center_coincident = 0;  // camera exactly on a voxel center
  long skipped_camera_inside = 0;  // camera inside the voxel; faces not marked
};

// Marks the voxel of every observed surface point occupied and accumulates
// seen-face bits: face j is seen when the unit vector from voxel center to
// the camera has strictly positive dot with the face normal. Points are
// binned a hair forward along the viewing ray so samples lying exactly on a
// voxel boundary plane land in the voxel whose entry face the ray crossed.
// Face bits are only set from camera positions strictly outside the voxel
// cube. Occupied never reverts; face bits only accumulate.
IntegrateResult integrate_observation(VoxelGrid& grid, const std::vector<Vec3>& points,
                                      const Vec3& cam_pos);

// Carves free space along every pixel ray: voxels strictly between the
// camera and the depth sample become free (unknown -> free only; occupied is
// never downgraded). Miss rays carve to max_range or the grid boundary. The
// camera's own voxel is marked free when unknown.
void carve_free_space(VoxelGrid& grid, const DepthImage& depth, const Intrinsics& intr,
                      const Pose& pose, double max_range);

// Single-ray carve; end point semantics as above. Exposed for testing.
void carve_ray(VoxelGrid& grid, const Vec3& cam, const Vec3& dir_unit, double t_end,
               bool ends_at_surface);

// Fraction of ground-truth visible faces currently seen in the grid.
// gt_faces holds one mask per voxel (same indexing); gt_total > 0 required.
double face_coverage(const VoxelGrid& grid, const std::vector<FaceMask>& gt_faces,
                     long gt_total);

// Nearest collision-free viewpoint: returns p unchanged when p's voxel is
// free and the voxel center's height lies in [floor_clearance, height_cap];
// otherwise the center of the nearest qualifying free voxel (Euclidean
// distance to p, ties broken by lexicographic voxel index). Throws Error
// when no voxel qualifies.
Vec3 nearest_collision_free(const VoxelGrid& grid, const Vec3& p, double height_cap,
                            double floor_clearance);

// Binary snapshot: [int32 g][3x float64 origin][float64 voxel_size]
// [g^3 state bytes][g^3 face-mask bytes], little-endian.
std::vector<std::uint8_t> serialize_grid(const VoxelGrid& grid);
VoxelGrid deserialize_grid(const std::vector<std::uint8_t>& bytes);

// Human-oriented JSON dump (counts plus sparse cell listings).
std::string grid_debug_json(const VoxelGrid& grid);

}  // namespace nbv
