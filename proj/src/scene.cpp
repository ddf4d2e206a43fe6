#include "nbv/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "nbv/util.hpp"

namespace nbv {

void SceneConfig::validate() const {
  if (!(scene_size > 0.0)) throw Error("SceneConfig: scene_size must be positive");
  if (!(target_extent > 0.0) || target_extent >= scene_size)
    throw Error("SceneConfig: target_extent must lie in (0, scene_size)");
  const double margin = scene_size / 2.0 - target_extent / 2.0;
  if (std::abs(object_center.x()) > margin || std::abs(object_center.y()) > margin)
    throw Error("SceneConfig: object_center pushes the object outside the volume");
  if (ground_height < 0.0 || ground_height + target_extent > scene_size)
    throw Error("SceneConfig: object does not fit vertically");
}

namespace {

bool axis_separates(double half, double pa, double pb, double pc) {
  const double mn = std::min({pa, pb, pc});
  const double mx = std::max({pa, pb, pc});
  return mn > half || mx < -half;
}

}  // namespace

bool triangle_box_overlap(const Vec3& box_center, const Vec3& box_half, const Vec3& a,
                          const Vec3& b, const Vec3& c) {
  const Vec3 v0 = a - box_center, v1 = b - box_center, v2 = c - box_center;
  const Vec3 h = box_half;

  // Box face normals (the triangle AABB test).
  for (int ax = 0; ax < 3; ++ax)
    if (axis_separates(h[ax], v0[ax], v1[ax], v2[ax])) return false;

  // Triangle plane.
  const Vec3 e0 = v1 - v0, e1 = v2 - v1, e2 = v0 - v2;
  const Vec3 n = e0.cross(e1);
  const double d = n.dot(v0);
  const double r = h.dot(n.cwiseAbs());
  if (std::abs(d) > r) return false;

  // Nine edge cross products.
  const Vec3 edges[3] = {e0, e1, e2};
  for (int ei = 0; ei < 3; ++ei) {
    const Vec3& e = edges[ei];
    for (int ax = 0; ax < 3; ++ax) {
      const int u = (ax + 1) % 3, w = (ax + 2) % 3;
      // axis = cross(unit[ax], e)
      Vec3 axis = Vec3::Zero();
      axis[u] = -e[w];
      axis[w] = e[u];
      const double ra = h[u] * std::abs(axis[u]) + h[w] * std::abs(axis[w]);
      const double p0 = axis.dot(v0), p1 = axis.dot(v1), p2 = axis.dot(v2);
      if (axis_separates(ra, p0, p1, p2)) return false;
    }
  }
  return true;
}

std::vector<std::uint8_t> voxelize(const TriangleMesh& mesh, int g, const Vec3& origin,
                                   double voxel_size) {
  if (g <= 0 || !(voxel_size > 0.0)) throw Error("voxelize: bad frame");
  const Aabb box = mesh_aabb(mesh);
  const Vec3 frame_hi = origin + Vec3::Constant(g * voxel_size);
  const double slack = 1e-9 * voxel_size;
  if ((box.lo.array() < origin.array() - slack).any() ||
      (box.hi.array() > frame_hi.array() + slack).any())
    throw Error("voxelize: mesh exceeds the frame volume (placement bug)");

  std::vector<std::uint8_t> occ(static_cast<std::size_t>(g) * g * g, 0);
  auto index = [g](int i, int j, int k) {
    return (static_cast<std::size_t>(i) * g + j) * g + k;
  };
  const Vec3 half = Vec3::Constant(0.5 * voxel_size);
  const double plane_eps = 1e-9 * voxel_size;

  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Vec3 a = mesh.vertex(static_cast<int>(t), 0);
    const Vec3 b = mesh.vertex(static_cast<int>(t), 1);
    const Vec3 c = mesh.vertex(static_cast<int>(t), 2);
    Vec3i lo, hi;
    for (int ax = 0; ax < 3; ++ax) {
      const double mn = std::min({a[ax], b[ax], c[ax]});
      const double mx = std::max({a[ax], b[ax], c[ax]});
      lo[ax] = std::clamp(static_cast<int>(std::floor((mn - origin[ax]) / voxel_size)), 0,
                          g - 1);
      // Half-open upper bound: a max coordinate exactly on a grid plane only
      // touches the layer above with zero measure, so that layer is excluded
      // (voxels own their lower boundary planes).
      const double rel_hi = (mx - origin[ax]) / voxel_size;
      const double snapped_hi = std::round(rel_hi);
      int top;
      if (std::abs(rel_hi - snapped_hi) * voxel_size <= plane_eps)
        top = static_cast<int>(snapped_hi) - 1;
      else
        top = static_cast<int>(std::floor(rel_hi));
      hi[ax] = std::clamp(top, 0, g - 1);
    }

    // A triangle lying exactly in a grid plane belongs to the voxel layer on
    // the side opposite its normal; a closed SAT would claim both layers.
    for (int ax = 0; ax < 3; ++ax) {
      const double mn = std::min({a[ax], b[ax], c[ax]});
      const double mx = std::max({a[ax], b[ax], c[ax]});
      if (mx - mn > plane_eps) continue;
      const double rel = (0.5 * (mn + mx) - origin[ax]) / voxel_size;
      const double snapped = std::round(rel);
      if (std::abs(rel - snapped) * voxel_size > plane_eps) continue;
      const Vec3 nrm = (b - a).cross(c - a);
      if (std::abs(nrm[ax]) <= 0.0) continue;  // degenerate; keep both layers
      const int plane = static_cast<int>(snapped);
      const int layer = nrm[ax] > 0.0 ? plane - 1 : plane;
      lo[ax] = std::clamp(layer, 0, g - 1);
      hi[ax] = lo[ax];
    }

    for (int i = lo.x(); i <= hi.x(); ++i) {
      for (int j = lo.y(); j <= hi.y(); ++j) {
        for (int k = lo.z(); k <= hi.z(); ++k) {
          const std::size_t idx = index(i, j, k);
          if (occ[idx]) continue;
          const Vec3 center =
              origin + voxel_size * (Vec3(i, j, k) + Vec3::Constant(0.5));
          if (triangle_box_overlap(center, half, a, b, c)) occ[idx] = 1;
        }
      }
    }
  }
  return occ;
}

void fill_enclosed(std::vector<std::uint8_t>& occupied, int g) {
  const std::size_t n = static_cast<std::size_t>(g) * g * g;
  if (occupied.size() != n) throw Error("fill_enclosed: occupancy size mismatch");
  auto index = [g](const Vec3i& v) {
    return (static_cast<std::size_t>(v.x()) * g + v.y()) * g + v.z();
  };
  auto in_bounds = [g](const Vec3i& v) {
    return (v.array() >= 0).all() && (v.array() < g).all();
  };
  std::vector<std::uint8_t> reachable(n, 0);
  std::vector<std::int32_t> queue;
  queue.reserve(n);
  auto push = [&](const Vec3i& v) {
    const std::size_t idx = index(v);
    if (occupied[idx] || reachable[idx]) return;
    reachable[idx] = 1;
    queue.push_back(static_cast<std::int32_t>(idx));
  };
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      for (int k = 0; k < g; ++k) {
        if (i == 0 || j == 0 || k == 0 || i == g - 1 || j == g - 1 || k == g - 1)
          push(Vec3i(i, j, k));
      }
    }
  }
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::int32_t idx = queue[head];
    const int k = idx % g, j = (idx / g) % g, i = idx / (g * g);
    for (const Vec3i& off : face_offsets()) {
      const Vec3i nb = Vec3i(i, j, k) + off;
      if (in_bounds(nb)) push(nb);
    }
  }
  for (std::size_t idx = 0; idx < n; ++idx)
    if (!occupied[idx] && !reachable[idx]) occupied[idx] = 1;
}

VisibleFaces prune_invisible(const std::vector<std::uint8_t>& occupied, int g) {
  const std::size_t n = static_cast<std::size_t>(g) * g * g;
  if (occupied.size() != n) throw Error("prune_invisible: occupancy size mismatch");
  auto index = [g](const Vec3i& v) {
    return (static_cast<std::size_t>(v.x()) * g + v.y()) * g + v.z();
  };
  auto in_bounds = [g](const Vec3i& v) {
    return (v.array() >= 0).all() && (v.array() < g).all();
  };

  // Flood fill the exterior through non-occupied voxels.
  std::vector<std::uint8_t> reachable(n, 0);
  std::vector<std::int32_t> queue;
  queue.reserve(n);
  auto push = [&](const Vec3i& v) {
    const std::size_t idx = index(v);
    if (occupied[idx] || reachable[idx]) return;
    reachable[idx] = 1;
    queue.push_back(static_cast<std::int32_t>(idx));
  };
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      for (int k = 0; k < g; ++k) {
        if (i == 0 || j == 0 || k == 0 || i == g - 1 || j == g - 1 || k == g - 1)
          push(Vec3i(i, j, k));
      }
    }
  }
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::int32_t idx = queue[head];
    const int k = idx % g, j = (idx / g) % g, i = idx / (g * g);
    for (const Vec3i& off : face_offsets()) {
      const Vec3i nb = Vec3i(i, j, k) + off;
      if (in_bounds(nb)) push(nb);
    }
  }

  VisibleFaces out;
  out.faces.assign(n, 0);
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      for (int k = 0; k < g; ++k) {
        const Vec3i v(i, j, k);
        const std::size_t idx = index(v);
        if (!occupied[idx]) continue;
        FaceMask m = 0;
        for (int f = 0; f < kNumFaces; ++f) {
          const Vec3i nb = v + face_offsets()[f];
          const bool visible = !in_bounds(nb) || reachable[index(nb)];
          if (visible) m = with_face(m, f);
        }
        out.faces[idx] = m;
        out.total += face_count(m);
      }
    }
  }
  return out;
}

long GroundTruth::occupied_count() const {
  long c = 0;
  for (std::uint8_t o : occupied) c += o;
  return c;
}

PreparedScene prep_scene(const TriangleMesh& raw_mesh, const SceneConfig& cfg, int g,
                         int n_surface_points, std::uint64_t sample_seed) {
  cfg.validate();
  if (g <= 0) throw Error("prep_scene: g must be positive");

  PreparedScene out;
  out.mesh = normalize_and_place(raw_mesh, cfg.target_extent, cfg.object_center,
                                 cfg.ground_height);

  GroundTruth& gt = out.gt;
  gt.g = g;
  gt.voxel_size = cfg.scene_size / g;
  gt.origin = Vec3(-cfg.scene_size / 2.0, -cfg.scene_size / 2.0, 0.0);
  gt.object_box = mesh_aabb(out.mesh);
  gt.occupied = voxelize(out.mesh, g, gt.origin, gt.voxel_size);
  // Solid occupancy: cavities sealed off from the exterior are as much a
  // collision volume as the surface shell.
  fill_enclosed(gt.occupied, g);

  VisibleFaces vis = prune_invisible(gt.occupied, g);
  gt.visible_faces = std::move(vis.faces);
  gt.total_visible_faces = vis.total;
  if (gt.total_visible_faces == 0)
    throw Error("prep_scene: object has no visible faces");

  // Keep samples whose voxel exposes a visible face along the sample normal:
  // those are the physically capturable surface points.
  const double nudge = 1e-6 * gt.voxel_size;
  for (const SurfaceSample& s : sample_surface(out.mesh, n_surface_points, sample_seed)) {
    const Vec3 nrm = triangle_normal(out.mesh, s.triangle);
    if (nrm.isZero(0.0)) continue;
    const Vec3 inward = s.point - nudge * nrm;
    const Vec3 rel = (inward - gt.origin) / gt.voxel_size;
    const Vec3i v(static_cast<int>(std::floor(rel.x())), static_cast<int>(std::floor(rel.y())),
                  static_cast<int>(std::floor(rel.z())));
    if (!gt.in_bounds(v)) continue;
    const std::size_t idx = gt.index(v);
    if (!gt.occupied[idx]) continue;
    const FaceMask vis_m = gt.visible_faces[idx];
    bool capturable = false;
    for (int f = 0; f < kNumFaces && !capturable; ++f)
      if (face_set(vis_m, f) && nrm.dot(face_normal(f)) > 1e-12) capturable = true;
    if (capturable) gt.surface_points.push_back(s.point);
  }
  if (gt.surface_points.empty())
    throw Error("prep_scene: no capturable surface points");
  return out;
}

Vec3 gt_lookat(const GroundTruth& gt, const std::vector<FaceMask>& seen_faces) {
  if (seen_faces.size() != gt.visible_faces.size())
    throw Error("gt_lookat: face table size mismatch");
  Vec3 acc = Vec3::Zero();
  double weight = 0.0;
  for (int i = 0; i < gt.g; ++i) {
    for (int j = 0; j < gt.g; ++j) {
      for (int k = 0; k < gt.g; ++k) {
        const Vec3i v(i, j, k);
        const std::size_t idx = gt.index(v);
        const FaceMask unseen =
            static_cast<FaceMask>(gt.visible_faces[idx] & ~seen_faces[idx]);
        if (!unseen) continue;
        const double w = face_count(unseen);
        acc += w * gt.voxel_center(v);
        weight += w;
      }
    }
  }
  if (weight == 0.0) throw Error("gt_lookat: every visible face is seen");
  return acc / weight;
}

namespace {
constexpr char kGtMagic[4] = {'N', 'B', 'V', 'G'};
constexpr std::uint32_t kGtVersion = 1;
constexpr std::uint8_t kModeConservative = 1;
}  // namespace

void save_gt(const std::string& path, const GroundTruth& gt) {
  ByteWriter w;
  w.raw(kGtMagic, 4);
  w.put<std::uint32_t>(kGtVersion);
  w.put<std::uint8_t>(kModeConservative);
  w.put<std::int32_t>(gt.g);
  for (int a = 0; a < 3; ++a) w.put<double>(gt.origin[a]);
  w.put<double>(gt.voxel_size);
  for (int a = 0; a < 3; ++a) w.put<double>(gt.object_box.lo[a]);
  for (int a = 0; a < 3; ++a) w.put<double>(gt.object_box.hi[a]);
  const std::size_t n = static_cast<std::size_t>(gt.g) * gt.g * gt.g;
  if (gt.occupied.size() != n || gt.visible_faces.size() != n)
    throw Error("save_gt: inconsistent ground truth");
  for (std::uint8_t o : gt.occupied)
    w.put<std::uint8_t>(o ? static_cast<std::uint8_t>(VoxelState::occupied)
                          : static_cast<std::uint8_t>(VoxelState::unknown));
  w.raw(gt.visible_faces.data(), gt.visible_faces.size());
  w.put<std::int64_t>(static_cast<std::int64_t>(gt.surface_points.size()));
  for (const Vec3& p : gt.surface_points)
    for (int a = 0; a < 3; ++a) w.put<double>(p[a]);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(w.bytes.data()),
            static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw Error(path + ": write failed");
}

GroundTruth load_gt(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path + ": cannot open");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  ByteReader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kGtMagic, 4) != 0) throw Error(path + ": not a ground-truth cache");
  if (r.get<std::uint32_t>() != kGtVersion) throw Error(path + ": unsupported cache version");
  if (r.get<std::uint8_t>() != kModeConservative)
    throw Error(path + ": unsupported voxelization mode");

  GroundTruth gt;
  gt.g = r.get<std::int32_t>();
  if (gt.g <= 0 || gt.g > 4096) throw Error(path + ": bad grid dimension");
  for (int a = 0; a < 3; ++a) gt.origin[a] = r.get<double>();
  gt.voxel_size = r.get<double>();
  if (!(gt.voxel_size > 0.0)) throw Error(path + ": bad voxel size");
  for (int a = 0; a < 3; ++a) gt.object_box.lo[a] = r.get<double>();
  for (int a = 0; a < 3; ++a) gt.object_box.hi[a] = r.get<double>();
  if (!gt.object_box.lo.allFinite() || !gt.object_box.hi.allFinite() ||
      (gt.object_box.lo.array() > gt.object_box.hi.array()).any())
    throw Error(path + ": bad object box");
  const std::size_t n = static_cast<std::size_t>(gt.g) * gt.g * gt.g;
  if (r.remaining() < 2 * n + 8) throw Error(path + ": truncated cache");
  gt.occupied.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = r.get<std::uint8_t>();
    if (s != static_cast<std::uint8_t>(VoxelState::unknown) &&
        s != static_cast<std::uint8_t>(VoxelState::occupied))
      throw Error(path + ": invalid occupancy byte");
    gt.occupied[i] = s == static_cast<std::uint8_t>(VoxelState::occupied) ? 1 : 0;
  }
  gt.visible_faces.resize(n);
  gt.total_visible_faces = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto m = r.get<std::uint8_t>();
    if (m & ~0x3f) throw Error(path + ": invalid face mask");
    if (m && !gt.occupied[i]) throw Error(path + ": face mask on empty voxel");
    gt.visible_faces[i] = m;
    gt.total_visible_faces += face_count(m);
  }
  const auto count = r.get<std::int64_t>();
  if (count < 0 || r.remaining() != static_cast<std::size_t>(count) * 24)
    throw Error(path + ": corrupt point section");
  gt.surface_points.resize(static_cast<std::size_t>(count));
  for (auto& p : gt.surface_points) {
    for (int a = 0; a < 3; ++a) p[a] = r.get<double>();
    if (!p.allFinite()) throw Error(path + ": non-finite surface point");
  }
  return gt;
}

}  // namespace nbv
