#include "nbv/camera.hpp"

#include <cmath>
#include <fstream>

#include "nbv/bvh.hpp"
#include "nbv/util.hpp"

namespace nbv {

Pose pose_from_lookat(const Vec3& position, const Vec3& target) {
  const Vec3 f = target - position;
  const double len = f.norm();
  if (!(len > 0.0)) throw Error("pose_from_lookat: target coincides with position");
  Pose pose;
  pose.position = position;
  pose.yaw = (f.x() == 0.0 && f.y() == 0.0) ? 0.0 : std::atan2(f.y(), f.x());
  if (pose.yaw == -EIGEN_PI) pose.yaw = EIGEN_PI;
  pose.pitch = std::asin(std::clamp(f.z() / len, -1.0, 1.0));
  return pose;
}

CameraBasis make_camera_basis(const Intrinsics& intr, const Pose& pose) {
  if (intr.height <= 0 || intr.width <= 0) throw Error("camera: non-positive image size");
  if (!(intr.vertical_fov > 0.0) || intr.vertical_fov >= EIGEN_PI)
    throw Error("camera: vertical fov out of range");
  const double tv = std::tan(0.5 * intr.vertical_fov);
  const double th = tv * static_cast<double>(intr.width) / intr.height;  // square pixels
  CameraBasis basis;
  basis.origin = pose.position;
  basis.forward = pose.forward();
  basis.right_s = th * pose.right();
  basis.up_s = tv * pose.up();
  return basis;
}

RenderResult render_hits(const TriangleMesh& mesh, const Bvh& bvh, const Intrinsics& intr,
                         const Pose& pose) {
  const CameraBasis basis = make_camera_basis(intr, pose);
  RenderResult res;
  res.depth.height = intr.height;
  res.depth.width = intr.width;
  const std::size_t n = static_cast<std::size_t>(intr.height) * intr.width;
  res.depth.depth.assign(n, std::numeric_limits<double>::infinity());
  res.triangle.assign(n, -1);
  parallel_for(n, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t px = lo; px < hi; ++px) {
      const int r = static_cast<int>(px / intr.width);
      const int c = static_cast<int>(px % intr.width);
      const Vec3 dir = basis.ray_dir(r, c, intr.height, intr.width);
      if (const auto hit = bvh.closest_hit(basis.origin, dir, intr.max_range)) {
        res.depth.depth[px] = hit->t;
        res.triangle[px] = hit->triangle;
      }
    }
  }, 4096);
  (void)mesh;
  return res;
}

DepthImage render_depth(const TriangleMesh& mesh, const Bvh& bvh, const Intrinsics& intr,
                        const Pose& pose) {
  return render_hits(mesh, bvh, intr, pose).depth;
}

GrayImage shade_hits(const TriangleMesh& mesh, const RenderResult& hits, const Intrinsics& intr,
                     const Pose& pose) {
  const CameraBasis basis = make_camera_basis(intr, pose);
  GrayImage img;
  img.height = hits.depth.height;
  img.width = hits.depth.width;
  const std::size_t n = hits.triangle.size();
  img.value.assign(n, 0.0);
  for (std::size_t px = 0; px < n; ++px) {
    const int tri = hits.triangle[px];
    if (tri < 0) continue;
    const int r = static_cast<int>(px / img.width);
    const int c = static_cast<int>(px % img.width);
    const Vec3 view = -basis.ray_dir(r, c, img.height, img.width);
    const Vec3 nrm = triangle_normal(mesh, tri);
    img.value[px] = std::min(1.0, std::abs(nrm.dot(view)));
  }
  (void)intr;
  return img;
}

GrayImage render_gray(const TriangleMesh& mesh, const Bvh& bvh, const Intrinsics& intr,
                      const Pose& pose) {
  return shade_hits(mesh, render_hits(mesh, bvh, intr, pose), intr, pose);
}

std::vector<Vec3> unproject(const DepthImage& depth, const Intrinsics& intr, const Pose& pose) {
  const CameraBasis basis = make_camera_basis(intr, pose);
  std::vector<Vec3> pts;
  pts.reserve(depth.depth.size());
  for (int r = 0; r < depth.height; ++r) {
    for (int c = 0; c < depth.width; ++c) {
      const double d = depth.at(r, c);
      if (!std::isfinite(d)) continue;
      pts.push_back(basis.origin + d * basis.ray_dir(r, c, depth.height, depth.width));
    }
  }
  return pts;
}

void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open for writing");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  for (double v : img.value) {
    const int byte = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    out.put(static_cast<char>(byte));
  }
  if (!out) throw Error(path + ": write failed");
}

void write_pfm(const std::string& path, const DepthImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open for writing");
  out << "Pf\n" << img.width << ' ' << img.height << "\n-1.0\n";
  // PFM stores scanlines bottom-to-top.
  for (int r = img.height - 1; r >= 0; --r) {
    for (int c = 0; c < img.width; ++c) {
      const float f = static_cast<float>(img.at(r, c));
      out.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
  }
  if (!out) throw Error(path + ": write failed");
}

void write_ply_points(const std::string& path, const std::vector<Vec3>& points) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open for writing");
  out << "ply\nformat binary_little_endian 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  for (const Vec3& p : points) {
    const float xyz[3] = {static_cast<float>(p.x()), static_cast<float>(p.y()),
                          static_cast<float>(p.z())};
    out.write(reinterpret_cast<const char*>(xyz), sizeof xyz);
  }
  if (!out) throw Error(path + ": write failed");
}

}  // namespace nbv
