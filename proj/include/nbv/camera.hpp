#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "nbv/types.hpp"

namespace nbv {

class Bvh;
struct TriangleMesh;

// Pinhole camera, square pixels, principal point at the image center.
// vertical_fov is the full vertical field of view in radians.
struct Intrinsics {
  int height = 300;
  int width = 300;
  double vertical_fov = 60.0 * EIGEN_PI / 180.0;
  double max_range = 20.0 * 1.7320508075688772;  // scene diagonal of a 20 m cube
};

// World frame: +z up. yaw is the rotation of the view direction about +z
// measured from +x; pitch tilts toward +z; roll is fixed to zero.
struct Pose {
  Vec3 position = Vec3::Zero();
  double yaw = 0.0;    // (-pi, pi]
  double pitch = 0.0;  // [-pi/2, pi/2]

  Vec3 forward() const {
    const double cp = std::cos(pitch);
    return Vec3(cp * std::cos(yaw), cp * std::sin(yaw), std::sin(pitch));
  }
  // Horizontal right vector; well-defined for all pitch values.
  Vec3 right() const { return Vec3(std::sin(yaw), -std::cos(yaw), 0.0); }
  Vec3 up() const { return right().cross(forward()); }
};

// Camera pose at `position` looking at `target` with zero roll.
// Throws Error when target coincides with position.
Pose pose_from_lookat(const Vec3& position, const Vec3& target);

struct DepthImage {
  int height = 0;
  int width = 0;
  std::vector<double> depth;  // Euclidean hit distance; +inf on miss

  double at(int r, int c) const { return depth[static_cast<std::size_t>(r) * width + c]; }
  bool is_hit(int r, int c) const { return std::isfinite(at(r, c)); }
};

struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<double> value;  // [0, 1]

  double at(int r, int c) const { return value[static_cast<std::size_t>(r) * width + c]; }
};

// Hit buffer shared by the depth and gray renders so one trace serves both.
struct RenderResult {
  DepthImage depth;
  std::vector<std::int32_t> triangle;  // hit triangle index; -1 on miss
};

// Precomputed ray-generation basis for a (intrinsics, pose) pair.
struct CameraBasis {
  Vec3 origin;
  Vec3 forward, right_s, up_s;  // right_s/up_s scaled by tan(fov/2)

  // Unit direction through the center of pixel (row r, col c); row 0 is the
  // top image row, so +row runs down the image.
  Vec3 ray_dir(int r, int c, int height, int width) const {
    const double px = (2.0 * (c + 0.5) / width - 1.0);
    const double py = (1.0 - 2.0 * (r + 0.5) / height);
    return (forward + px * right_s + py * up_s).normalized();
  }
};

CameraBasis make_camera_basis(const Intrinsics& intr, const Pose& pose);

// Nearest-hit depth render (two-sided triangles), pixel-parallel.
RenderResult render_hits(const TriangleMesh& mesh, const Bvh& bvh, const Intrinsics& intr,
                         const Pose& pose);
DepthImage render_depth(const TriangleMesh& mesh, const Bvh& bvh, const Intrinsics& intr,
                        const Pose& pose);

// Headlight Lambertian shading: max(0, dot(n_hat, v_hat)) with the normal
// flipped toward the camera; 0 on miss.
GrayImage render_gray(const TriangleMesh& mesh, const Bvh& bvh, const Intrinsics& intr,
                      const Pose& pose);
GrayImage shade_hits(const TriangleMesh& mesh, const RenderResult& hits, const Intrinsics& intr,
                     const Pose& pose);

// World-space surface points for every finite depth pixel.
std::vector<Vec3> unproject(const DepthImage& depth, const Intrinsics& intr, const Pose& pose);

// Image dumps. PGM is 8-bit binary P5; PFM is 32-bit little-endian with the
// conventional negative scale; PLY is binary_little_endian float32 xyz.
void write_pgm(const std::string& path, const GrayImage& img);
void write_pfm(const std::string& path, const DepthImage& img);
void write_ply_points(const std::string& path, const std::vector<Vec3>& points);

}  // namespace nbv
