#include "nbv/bvh.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace nbv {

std::optional<double> intersect_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a,
                                         const Vec3& b, const Vec3& c) {
  const Vec3 e1 = b - a, e2 = c - a;
  const Vec3 pvec = dir.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < 1e-14) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 tvec = origin - a;
  const double u = tvec.dot(pvec) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 qvec = tvec.cross(e1);
  const double v = dir.dot(qvec) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(qvec) * inv;
  if (t <= 0.0) return std::nullopt;
  return t;
}

Bvh::Bvh(const TriangleMesh& mesh) : mesh_(&mesh) {
  const int n = static_cast<int>(mesh.triangles.size());
  if (n == 0) throw Error("Bvh: empty mesh");
  std::vector<PrimInfo> prims(n);
  for (int i = 0; i < n; ++i) {
    Aabb box;
    box.expand(mesh.vertex(i, 0));
    box.expand(mesh.vertex(i, 1));
    box.expand(mesh.vertex(i, 2));
    prims[i] = {box, box.center(), i};
  }
  nodes_.reserve(2 * n);
  order_.reserve(n);
  build(prims, 0, n);
}

int Bvh::build(std::vector<PrimInfo>& prims, int begin, int end) {
  const int node_idx = static_cast<int>(nodes_.size());
  nodes_.emplace_back();

  Aabb bounds, centroid_bounds;
  for (int i = begin; i < end; ++i) {
    bounds.expand(prims[i].box);
    centroid_bounds.expand(prims[i].centroid);
  }
  nodes_[node_idx].lo = bounds.lo;
  nodes_[node_idx].hi = bounds.hi;

  const int count = end - begin;
  auto make_leaf = [&] {
    nodes_[node_idx].first = static_cast<std::int32_t>(order_.size());
    nodes_[node_idx].count = count;
    for (int i = begin; i < end; ++i) order_.push_back(prims[i].tri);
  };
  if (count <= 4) {
    make_leaf();
    return node_idx;
  }

  int axis = 0;
  centroid_bounds.extent().maxCoeff(&axis);
  const double cb_lo = centroid_bounds.lo[axis];
  const double cb_ext = centroid_bounds.extent()[axis];

  int mid = -1;
  if (cb_ext > 1e-12) {
    constexpr int kBins = 16;
    struct Bin {
      Aabb box;
      int count = 0;
    };
    std::array<Bin, kBins> bins;
    auto bin_of = [&](const PrimInfo& p) {
      const int b = static_cast<int>(kBins * (p.centroid[axis] - cb_lo) / cb_ext);
      return std::clamp(b, 0, kBins - 1);
    };
    for (int i = begin; i < end; ++i) {
      Bin& b = bins[bin_of(prims[i])];
      b.box.expand(prims[i].box);
      ++b.count;
    }
    auto half_area = [](const Aabb& b) {
      if (!b.valid()) return 0.0;
      const Vec3 e = b.extent();
      return e.x() * e.y() + e.y() * e.z() + e.z() * e.x();
    };
    std::array<double, kBins - 1> cost;
    for (int split = 0; split < kBins - 1; ++split) {
      Aabb lb, rb;
      int lc = 0, rc = 0;
      for (int b = 0; b <= split; ++b) {
        if (bins[b].count) lb.expand(bins[b].box);
        lc += bins[b].count;
      }
      for (int b = split + 1; b < kBins; ++b) {
        if (bins[b].count) rb.expand(bins[b].box);
        rc += bins[b].count;
      }
      cost[split] = (lc ? lc * half_area(lb) : 0.0) + (rc ? rc * half_area(rb) : 0.0);
    }
    int best = 0;
    for (int s = 1; s < kBins - 1; ++s)
      if (cost[s] < cost[best]) best = s;
    const auto it = std::partition(prims.begin() + begin, prims.begin() + end,
                                   [&](const PrimInfo& p) { return bin_of(p) <= best; });
    mid = static_cast<int>(it - prims.begin());
    if (mid == begin || mid == end) mid = -1;  // degenerate split, fall back
  }
  if (mid < 0) {
    mid = begin + count / 2;
    std::nth_element(prims.begin() + begin, prims.begin() + mid, prims.begin() + end,
                     [axis](const PrimInfo& a, const PrimInfo& b) {
                       return a.centroid[axis] < b.centroid[axis];
                     });
  }

  build(prims, begin, mid);
  nodes_[node_idx].right = build(prims, mid, end);
  return node_idx;
}

std::optional<RayHit> Bvh::closest_hit(const Vec3& origin, const Vec3& dir, double t_max) const {
  if (nodes_.empty()) return std::nullopt;
  const Vec3 inv_dir = dir.cwiseInverse();

  // Slab test; entry distance or +inf when the box is missed.
  auto box_enter = [&](const Node& n, double best) {
    double t0 = 0.0, t1 = best;
    for (int a = 0; a < 3; ++a) {
      double ta = (n.lo[a] - origin[a]) * inv_dir[a];
      double tb = (n.hi[a] - origin[a]) * inv_dir[a];
      if (inv_dir[a] < 0.0) std::swap(ta, tb);
      t0 = ta > t0 ? ta : t0;
      t1 = tb < t1 ? tb : t1;
      if (t0 > t1) return std::numeric_limits<double>::infinity();
    }
    return t0;
  };

  double best_t = t_max;
  int best_tri = -1;
  std::array<int, 128> stack;
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const int ni = stack[--top];
    const Node& node = nodes_[ni];
    if (box_enter(node, best_t) == std::numeric_limits<double>::infinity()) continue;
    if (node.count > 0) {
      for (int s = 0; s < node.count; ++s) {
        const int tri = order_[node.first + s];
        const auto t = intersect_triangle(origin, dir, mesh_->vertex(tri, 0),
                                          mesh_->vertex(tri, 1), mesh_->vertex(tri, 2));
        if (t && *t <= best_t && (*t < best_t || best_tri < 0)) {
          best_t = *t;
          best_tri = tri;
        }
      }
      continue;
    }
    const int left = ni + 1, right = node.right;
    const double tl = box_enter(nodes_[left], best_t);
    const double tr = box_enter(nodes_[right], best_t);
    // Near child popped first.
    if (tl <= tr) {
      if (std::isfinite(tr)) stack[top++] = right;
      if (std::isfinite(tl)) stack[top++] = left;
    } else {
      if (std::isfinite(tl)) stack[top++] = left;
      if (std::isfinite(tr)) stack[top++] = right;
    }
  }
  if (best_tri < 0) return std::nullopt;
  return RayHit{best_t, best_tri};
}

}  // namespace nbv
