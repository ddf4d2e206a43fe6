#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nbv/mesh.hpp"
#include "nbv/types.hpp"

namespace nbv {

struct RayHit {
  double t = 0.0;
  int triangle = -1;
};

// Two-sided Moeller-Trumbore; hits with t in (t_min, t_max].
std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                                         const Vec3& b, const Vec3& c);

// Binned-SAH BVH (median-split fallback, leaves hold up to 4 triangles).
class Bvh {
 public:
  Bvh() = default;
  explicit Bvh(const TriangleMesh& mesh);

  // Nearest hit with t in (0, t_max]; two-sided triangles.
  std::optional<RayHit> closest_hit(const Vec3& origin, const Vec3& dir, double t_max) const;

  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Vec3 lo, hi;
    std::int32_t right = -1;   // internal: right child (left child is self+1)
    std::int32_t first = -1;   // leaf: first triangle slot
    std::int32_t count = 0;    // leaf: triangle count (0 for internal nodes)
  };

  struct PrimInfo {
    Aabb box;
    Vec3 centroid;
    std::int32_t tri;
  };

  int build(std::vector<PrimInfo>& prims, int begin, int end);

  const TriangleMesh* mesh_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<std::int32_t> order_;  // triangle indices grouped by leaf
};

}  // namespace nbv
