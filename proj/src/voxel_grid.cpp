#include "nbv/voxel_grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <nlohmann/json.hpp>

#include "nbv/camera.hpp"
#include "nbv/util.hpp"

namespace nbv {

static_assert(std::endian::native == std::endian::little,
              "binary formats are defined little-endian");

VoxelGrid::VoxelGrid(int g, const Vec3& origin, double voxel_size)
    : g_(g), origin_(origin), voxel_size_(voxel_size) {
  if (g <= 0) throw Error("VoxelGrid: g must be positive");
  if (!(voxel_size > 0.0)) throw Error("VoxelGrid: voxel_size must be positive");
  const std::size_t n = static_cast<std::size_t>(g) * g * g;
  states_.assign(n, VoxelState::unknown);
  faces_.assign(n, 0);
}

long VoxelGrid::seen_face_total() const {
  long total = 0;
  for (FaceMask m : faces_) total += face_count(m);
  return total;
}

std::optional<Vec3i> world_to_voxel(const VoxelGrid& grid, const Vec3& p) {
  const Vec3 rel = (p - grid.origin()) / grid.voxel_size();
  const Vec3i v(static_cast<int>(std::floor(rel.x())), static_cast<int>(std::floor(rel.y())),
                static_cast<int>(std::floor(rel.z())));
  if (!grid.in_bounds(v)) return std::nullopt;
  return v;
}

IntegrateResult integrate_observation(VoxelGrid& grid, const std::vector<Vec3>& points,
                                      const Vec3& cam_pos) {
  IntegrateResult res;
  const double nudge = 1e-6 * grid.voxel_size();
  const double half = 0.5 * grid.voxel_size();
  for (const Vec3& p : points) {
    Vec3 dir = p - cam_pos;
    const double dist = dir.norm();
    const Vec3 binned = dist > 0.0 ? Vec3(p + (nudge / dist) * dir) : p;
    const auto v = world_to_voxel(grid, binned);
    if (!v) continue;
    const std::size_t idx = grid.index(*v);
    if (grid.state(idx) != VoxelState::occupied) {
      grid.set_state(idx, VoxelState::occupied);
      ++res.newly_occupied;
    }
    const Vec3 center = grid.voxel_center(*v);
    const Vec3 to_cam = cam_pos - center;
    if (to_cam.cwiseAbs().maxCoeff() <= half) {
      // Camera inside (or on) this voxel's cube: the face visibility model
      // assumes an exterior viewpoint, so leave the face mask alone.
      if (to_cam.isZero(0.0))
        ++res.skipped_center_coincident;
      else
        ++res.skipped_camera_inside;
      continue;
    }
    const Vec3 d = to_cam.normalized();
    FaceMask m = grid.faces(idx);
    for (int f = 0; f < kNumFaces; ++f) {
      if (face_set(m, f)) continue;
      if (d.dot(face_normal(f)) > 0.0) {
        m = with_face(m, f);
        ++res.newly_seen_faces;
      }
    }
    grid.set_faces(idx, m);
  }
  return res;
}

void carve_ray(VoxelGrid& grid, const Vec3& cam, const Vec3& dir_unit, double t_end,
               bool ends_at_surface) {
  const int g = grid.g();
  const double vs = grid.voxel_size();

  // Clip the segment to the grid volume.
  double t0 = 0.0, t1 = t_end;
  for (int a = 0; a < 3; ++a) {
    const double lo = grid.origin()[a];
    const double hi = lo + vs * g;
    const double o = cam[a], d = dir_unit[a];
    if (d == 0.0) {
      if (o < lo || o > hi) return;
      continue;
    }
    double ta = (lo - o) / d, tb = (hi - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return;

  // Voxel strictly containing the surface sample; never carved here.
  std::optional<Vec3i> stop;
  if (ends_at_surface) {
    const double nudge = 1e-6 * vs;
    stop = world_to_voxel(grid, cam + (t_end + nudge) * dir_unit);
  }

  const Vec3 start = cam + t0 * dir_unit;
  Vec3i v;
  for (int a = 0; a < 3; ++a) {
    int idx = static_cast<int>(std::floor((start[a] - grid.origin()[a]) / vs));
    v[a] = std::clamp(idx, 0, g - 1);
  }

  Vec3i step;
  Vec3 t_max, t_delta;
  for (int a = 0; a < 3; ++a) {
    const double d = dir_unit[a];
    if (d > 0.0) {
      step[a] = 1;
      t_delta[a] = vs / d;
      t_max[a] = ((grid.origin()[a] + (v[a] + 1) * vs) - cam[a]) / d;
    } else if (d < 0.0) {
      step[a] = -1;
      t_delta[a] = -vs / d;
      t_max[a] = ((grid.origin()[a] + v[a] * vs) - cam[a]) / d;
    } else {
      step[a] = 0;
      t_delta[a] = std::numeric_limits<double>::infinity();
      t_max[a] = std::numeric_limits<double>::infinity();
    }
  }

  double t = t0;
  while (t <= t1) {
    if (stop && (v.array() == stop->array()).all()) return;
    const std::size_t idx = grid.index(v);
    if (grid.state(idx) == VoxelState::unknown) grid.set_state(idx, VoxelState::free);
    int axis = 0;
    if (t_max.y() < t_max.x()) axis = 1;
    if (t_max.z() < t_max[axis]) axis = 2;
    t = t_max[axis];
    v[axis] += step[axis];
    if (v[axis] < 0 || v[axis] >= g) return;
    t_max[axis] += t_delta[axis];
  }
}

void carve_free_space(VoxelGrid& grid, const DepthImage& depth, const Intrinsics& intr,
                      const Pose& pose, double max_range) {
  const CameraBasis basis = make_camera_basis(intr, pose);
  for (int r = 0; r < depth.height; ++r) {
    for (int c = 0; c < depth.width; ++c) {
      const double d = depth.at(r, c);
      const Vec3 dir = basis.ray_dir(r, c, depth.height, depth.width);
      if (std::isfinite(d))
        carve_ray(grid, pose.position, dir, d, true);
      else
        carve_ray(grid, pose.position, dir, max_range, false);
    }
  }
  // The camera demonstrably occupies traversable space.
  if (const auto v = world_to_voxel(grid, pose.position)) {
    if (grid.state(*v) == VoxelState::unknown) grid.set_state(*v, VoxelState::free);
  }
}

double face_coverage(const VoxelGrid& grid, const std::vector<FaceMask>& gt_faces,
                     long gt_total) {
  if (gt_total <= 0) throw Error("face_coverage: ground truth has no visible faces");
  if (gt_faces.size() != grid.size())
    throw Error("face_coverage: ground-truth face table size mismatch");
  long seen = 0;
  for (std::size_t i = 0; i < gt_faces.size(); ++i) {
    const FaceMask both = gt_faces[i] & grid.faces(i);
    if (both) seen += face_count(both);
  }
  return static_cast<double>(seen) / static_cast<double>(gt_total);
}

Vec3 nearest_collision_free(const VoxelGrid& grid, const Vec3& p, double height_cap,
                            double floor_clearance) {
  const auto own = world_to_voxel(grid, p);
  if (own && grid.state(*own) == VoxelState::free) {
    const double cz = grid.voxel_center(*own).z();
    if (cz >= floor_clearance && cz <= height_cap) return p;
  }
  double best_sq = std::numeric_limits<double>::infinity();
  std::size_t best_idx = 0;
  bool found = false;
  const int g = grid.g();
  std::size_t idx = 0;
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      for (int k = 0; k < g; ++k, ++idx) {
        if (grid.state(idx) != VoxelState::free) continue;
        const Vec3 center = grid.voxel_center(Vec3i(i, j, k));
        if (center.z() < floor_clearance || center.z() > height_cap) continue;
        const double d2 = (center - p).squaredNorm();
        if (d2 < best_sq) {
          best_sq = d2;
          best_idx = idx;
          found = true;
        }
      }
    }
  }
  if (!found) throw Error("nearest_collision_free: no qualifying free voxel");
  return grid.voxel_center(grid.unindex(best_idx));
}

std::vector<std::uint8_t> serialize_grid(const VoxelGrid& grid) {
  ByteWriter w;
  w.put<std::int32_t>(grid.g());
  for (int a = 0; a < 3; ++a) w.put<double>(grid.origin()[a]);
  w.put<double>(grid.voxel_size());
  w.raw(grid.states().data(), grid.states().size());
  w.raw(grid.face_masks().data(), grid.face_masks().size());
  return std::move(w.bytes);
}

VoxelGrid deserialize_grid(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  const auto g = r.get<std::int32_t>();
  if (g <= 0 || g > 4096) throw Error("grid snapshot: bad dimension");
  Vec3 origin;
  for (int a = 0; a < 3; ++a) origin[a] = r.get<double>();
  const double vs = r.get<double>();
  VoxelGrid grid(g, origin, vs);
  const std::size_t n = grid.size();
  if (r.remaining() != 2 * n) throw Error("grid snapshot: truncated payload");
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = r.get<std::uint8_t>();
    if (s > 2) throw Error("grid snapshot: invalid state byte");
    grid.set_state(i, static_cast<VoxelState>(s));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto m = r.get<std::uint8_t>();
    if (m & ~0x3f) throw Error("grid snapshot: invalid face mask");
    grid.set_faces(i, m);
  }
  return grid;
}

std::string grid_debug_json(const VoxelGrid& grid) {
  nlohmann::json j;
  j["g"] = grid.g();
  j["origin"] = {grid.origin().x(), grid.origin().y(), grid.origin().z()};
  j["voxel_size"] = grid.voxel_size();
  long n_free = 0, n_occ = 0;
  nlohmann::json occupied = nlohmann::json::array();
  nlohmann::json faces = nlohmann::json::object();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.state(i) == VoxelState::free) ++n_free;
    if (grid.state(i) == VoxelState::occupied) {
      ++n_occ;
      occupied.push_back(i);
    }
    if (grid.faces(i)) faces[std::to_string(i)] = grid.faces(i);
  }
  j["free_count"] = n_free;
  j["occupied_count"] = n_occ;
  j["unknown_count"] = static_cast<long>(grid.size()) - n_free - n_occ;
  j["seen_face_total"] = grid.seen_face_total();
  j["occupied"] = std::move(occupied);
  j["faces"] = std::move(faces);
  return j.dump();
}

}  // namespace nbv
