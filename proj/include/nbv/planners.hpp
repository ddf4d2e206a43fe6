#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nbv/env.hpp"
#include "nbv/types.hpp"

namespace nbv {

struct CandidateScore {
  Vec3 position = Vec3::Zero();
  long gain = 0;  // simulated newly seen faces
};

struct PlannerDecision {
  Vec3 action = Vec3::Zero();  // in [-1,1]^3
  Vec3 lookat = Vec3::Zero();
  bool fallback = false;       // strategy degraded to the random fallback
  std::vector<CandidateScore> debug;  // filled when candidate scoring is traced
};

struct PlannerContext {
  const VoxelGrid& grid;
  const GroundTruth& gt;
  const TriangleMesh& mesh;
  const Bvh& bvh;
  const EnvConfig& cfg;
  double height_cap;   // cap applying to the action about to be taken
  int step_index;
  Rng& rng;
};

// Uniform over free-voxel centers whose height qualifies; looks at the
// object AABB center.
PlannerDecision plan_random(PlannerContext& ctx);

// Steers toward the centroid of unseen frontier faces (occupied-voxel faces
// whose across-neighbor is not occupied), standing off along the dominant
// unseen-face direction.
PlannerDecision plan_frontier(PlannerContext& ctx);

// Greedy one-step oracle: candidate viewpoints on shells around the frontier
// centroid, scored by simulated newly-seen faces through low-resolution
// depth probes; argmax with lexicographic tie-break on candidate index.
PlannerDecision plan_greedy_oracle(PlannerContext& ctx);

struct GreedyParams {
  int directions = 64;       // spherical Fibonacci samples per shell
  int probe_resolution = 64; // probe image height == width
  std::vector<double> shell_scales = {0.75, 1.0, 1.25};  // x object radius
  bool collect_debug = false;  // record per-candidate scores in the decision
};

PlannerDecision plan_greedy_oracle(PlannerContext& ctx, const GreedyParams& params);

using PlannerFn = std::function<PlannerDecision(PlannerContext&)>;

// "random" | "frontier" | "greedy"; throws Error on unknown names.
// ("extern:<addr>" planners live at the bench layer, which owns sockets.)
PlannerFn make_planner(const std::string& name);

}  // namespace nbv
