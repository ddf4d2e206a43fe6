#include "nbv/planners.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace nbv {

namespace {

bool voxel_qualifies(const VoxelGrid& grid, std::size_t idx, double cap, double floor) {
  if (grid.state(idx) != VoxelState::free) return false;
  const double cz = grid.voxel_center(idx).z();
  return cz >= floor && cz <= cap;
}

// Schedulable under the belief: anything not known to be occupied. Unknown
// space is fair game for planning; the env relocates and penalizes if the
// true grid disagrees.
bool voxel_schedulable(const VoxelGrid& grid, std::size_t idx, double cap, double floor) {
  if (grid.state(idx) == VoxelState::occupied) return false;
  const double cz = grid.voxel_center(idx).z();
  return cz >= floor && cz <= cap;
}

// Nearest schedulable voxel center (lexicographic index tie-break), or p
// itself when its own voxel already qualifies.
std::optional<Vec3> nearest_schedulable(const VoxelGrid& grid, const Vec3& p, double cap,
                                        double floor) {
  const auto own = world_to_voxel(grid, p);
  if (own && voxel_schedulable(grid, grid.index(*own), cap, floor)) return p;
  double best_sq = std::numeric_limits<double>::infinity();
  std::size_t best_idx = 0;
  bool found = false;
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    if (!voxel_schedulable(grid, idx, cap, floor)) continue;
    const double d2 = (grid.voxel_center(idx) - p).squaredNorm();
    if (d2 < best_sq) {
      best_sq = d2;
      best_idx = idx;
      found = true;
    }
  }
  if (!found) return std::nullopt;
  return grid.voxel_center(grid.unindex(best_idx));
}

PlannerDecision random_decision(PlannerContext& ctx, bool as_fallback) {
  std::vector<std::size_t> candidates;
  candidates.reserve(ctx.grid.size());
  for (std::size_t i = 0; i < ctx.grid.size(); ++i)
    if (voxel_qualifies(ctx.grid, i, ctx.height_cap, ctx.cfg.floor_clearance))
      candidates.push_back(i);

  PlannerDecision d;
  d.lookat = ctx.gt.object_box.center();
  d.fallback = as_fallback;
  if (candidates.empty()) {
    // No carved voxel qualifies; fall back to a random legal-height point.
    const double s = ctx.cfg.scene.scene_size;
    const double z = ctx.rng.uniform(ctx.cfg.floor_clearance, std::min(ctx.height_cap, s));
    const Vec3 p(ctx.rng.uniform(-s / 2, s / 2), ctx.rng.uniform(-s / 2, s / 2), z);
    d.action = unscale_action(ctx.cfg, p);
    d.fallback = true;
    return d;
  }
  const std::size_t pick = candidates[ctx.rng.uniform_int(candidates.size())];
  d.action = unscale_action(ctx.cfg, ctx.grid.voxel_center(pick));
  return d;
}

struct Frontier {
  Vec3 centroid = Vec3::Zero();
  long total = 0;
  std::array<long, kNumFaces> per_face{};
};

// Unseen faces of belief-occupied voxels whose across-neighbor is not
// occupied: the boundary between what we know and what is left to see.
Frontier find_frontier(const VoxelGrid& grid) {
  Frontier fr;
  Vec3 acc = Vec3::Zero();
  const int g = grid.g();
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) {
      for (int k = 0; k < g; ++k) {
        const Vec3i v(i, j, k);
        const std::size_t idx = grid.index(v);
        if (grid.state(idx) != VoxelState::occupied) continue;
        const FaceMask seen = grid.faces(idx);
        int unseen_here = 0;
        for (int f = 0; f < kNumFaces; ++f) {
          if (face_set(seen, f)) continue;
          const Vec3i nb = v + face_offsets()[f];
          if (grid.in_bounds(nb) && grid.state(nb) == VoxelState::occupied) continue;
          ++unseen_here;
          ++fr.per_face[f];
        }
        if (unseen_here > 0) {
          acc += static_cast<double>(unseen_here) * grid.voxel_center(v);
          fr.total += unseen_here;
        }
      }
    }
  }
  if (fr.total > 0) fr.centroid = acc / static_cast<double>(fr.total);
  return fr;
}

// Spherical Fibonacci directions: deterministic, near-uniform over the
// sphere, covering low elevations for bottom-up viewpoints.
Vec3 fibonacci_dir(int i, int n) {
  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  const double z = 1.0 - (2.0 * i + 1.0) / n;
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  const double phi = 2.0 * EIGEN_PI * (i / golden - std::floor(i / golden));
  return Vec3(r * std::cos(phi), r * std::sin(phi), z);
}

}  // namespace

PlannerDecision plan_random(PlannerContext& ctx) { return random_decision(ctx, false); }

PlannerDecision plan_frontier(PlannerContext& ctx) {
  const Frontier fr = find_frontier(ctx.grid);
  if (fr.total == 0) return random_decision(ctx, true);

  int dominant = 0;
  for (int f = 1; f < kNumFaces; ++f)
    if (fr.per_face[f] > fr.per_face[dominant]) dominant = f;

  const double standoff =
      std::max(1.5 * ctx.grid.voxel_size(), 0.75 * ctx.cfg.scene.target_extent);
  const Vec3 wanted = fr.centroid + standoff * face_normal(dominant);
  const auto snapped =
      nearest_schedulable(ctx.grid, wanted, ctx.height_cap, ctx.cfg.floor_clearance);
  if (!snapped) return random_decision(ctx, true);
  const Vec3 position = *snapped;
  PlannerDecision d;
  d.action = unscale_action(ctx.cfg, position);
  d.lookat = fr.centroid;
  return d;
}

PlannerDecision plan_greedy_oracle(PlannerContext& ctx) {
  return plan_greedy_oracle(ctx, GreedyParams{});
}

PlannerDecision plan_greedy_oracle(PlannerContext& ctx, const GreedyParams& params) {
  const Frontier fr = find_frontier(ctx.grid);
  const Vec3 focus = fr.total > 0 ? fr.centroid : ctx.gt.object_box.center();

  const double radius = 0.5 * ctx.gt.object_box.extent().norm();
  std::vector<Vec3> candidates;
  candidates.reserve(params.shell_scales.size() * params.directions);
  for (double scale : params.shell_scales) {
    for (int i = 0; i < params.directions; ++i) {
      const Vec3 p = focus + scale * radius * fibonacci_dir(i, params.directions);
      if (p.z() > ctx.height_cap || p.z() < ctx.cfg.floor_clearance) continue;
      const auto v = world_to_voxel(ctx.grid, p);
      if (!v) continue;
      // Oracle collision filter: the true grid, so the simulated view is the
      // view the env will actually execute (no relocation).
      if (ctx.gt.occupied[ctx.gt.index(*v)]) continue;
      candidates.push_back(p);
    }
  }
  if (candidates.empty()) return random_decision(ctx, true);

  Intrinsics probe;
  probe.height = params.probe_resolution;
  probe.width = params.probe_resolution;
  probe.vertical_fov = ctx.cfg.vertical_fov;
  probe.max_range = ctx.cfg.max_range;

  long best_gain = -1;
  std::size_t best = 0;
  std::vector<CandidateScore> scores;
  if (params.collect_debug) scores.reserve(candidates.size());
  for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
    const Vec3& cand = candidates[ci];
    if ((cand - focus).norm() == 0.0) continue;
    const Pose pose = pose_from_lookat(cand, focus);
    const RenderResult hits = render_hits(ctx.mesh, ctx.bvh, probe, pose);
    const std::vector<Vec3> pts = unproject(hits.depth, probe, pose);
    VoxelGrid scratch = ctx.grid;
    const IntegrateResult sim = integrate_observation(scratch, pts, cand);
    if (params.collect_debug) scores.push_back({cand, sim.newly_seen_faces});
    if (sim.newly_seen_faces > best_gain) {
      best_gain = sim.newly_seen_faces;
      best = ci;
    }
  }
  if (best_gain < 0) return random_decision(ctx, true);

  PlannerDecision d;
  d.action = unscale_action(ctx.cfg, candidates[best]);
  d.lookat = focus;
  d.debug = std::move(scores);
  return d;
}

PlannerFn make_planner(const std::string& name) {
  if (name == "random") return [](PlannerContext& c) { return plan_random(c); };
  if (name == "frontier") return [](PlannerContext& c) { return plan_frontier(c); };
  if (name == "greedy") return [](PlannerContext& c) { return plan_greedy_oracle(c); };
  throw Error("unknown planner '" + name + "'");
}

}  // namespace nbv
