#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "nbv/bvh.hpp"
#include "nbv/camera.hpp"
#include "nbv/scene.hpp"
#include "nbv/types.hpp"
#include "nbv/util.hpp"
#include "nbv/voxel_grid.hpp"

namespace nbv {

enum class HeightMode { schedule, random_fixed };

struct HeightPhase {
  int from_step = 0;
  double cap = 10.0;
};

// Coverage reward source: newly seen voxel faces (default) or newly
// occupied voxels (the coarser point-style ablation).
enum class RewardMode { faces, points };

struct EnvConfig {
  int g = 20;
  int image_height = 300;
  int image_width = 300;
  double vertical_fov = 60.0 * EIGEN_PI / 180.0;
  double max_range = 20.0 * 1.7320508075688772;

  SceneConfig scene;

  int max_steps = 50;
  double face_target = 0.9;       // terminate when coverage reaches this
  double coverage_scale = 0.3;    // total coverage reward over an episode
  double penalty = 0.01;
  double floor_clearance = 0.0;
  double gamma = 0.1;             // discount used by trainers; informational here
  RewardMode reward_mode = RewardMode::faces;

  HeightMode height_mode = HeightMode::schedule;
  std::vector<HeightPhase> height_schedule = {{0, 10.0}, {40, 5.0}, {45, 2.0}};
  double random_height_max = 10.0;  // random_fixed mode: cap ~ U[start z, max]

  void validate() const;  // throws Error
};

// Height cap applying to the action taken at step_index (0-based).
double height_cap(const EnvConfig& cfg, int step_index);

// Affine action scaling from [-1,1]^3 to scene coordinates:
// x,y -> a * scene_size/2, z -> (a+1)/2 * scene_size.
Vec3 scale_action(const EnvConfig& cfg, const Vec3& a);
Vec3 unscale_action(const EnvConfig& cfg, const Vec3& p);

struct Observation {
  GrayImage gray;
  Eigen::Matrix<double, 6, 1> vector;  // x, y, z, pitch, yaw, height cap
  VoxelGrid grid;
  Vec3 lookat = Vec3::Zero();
  int step_index = 0;  // steps taken so far
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  double coverage_reward = 0.0;
  double penalty = 0.0;             // magnitude actually applied
  bool m_col = true;                // collision mask: false masks coverage to 0
  long newly_seen_faces = 0;
  double face_coverage = 0.0;
  bool terminated = false;
  std::string termination_reason;   // "", "face_target", "max_steps", "unschedulable"
  Vec3 raw_position = Vec3::Zero();   // scaled action before projection
  Vec3 a_prime = Vec3::Zero();        // collision-free capture position
  Vec3 gt_lookat_label = Vec3::Zero();
  bool gt_lookat_valid = false;
  bool action_clamped = false;
  IntegrateResult integrate;
  std::vector<Vec3> points;  // unprojected depth samples of this view
};

// Single-scene capture environment: every step renders from the projected
// viewpoint, carves free space, accumulates seen faces, and pays the masked
// coverage reward.
class Env {
 public:
  Env(std::shared_ptr<const PreparedScene> scene, const EnvConfig& cfg);

  // Samples a collision-free start oriented at the object center, captures
  // the initial view, and returns it as a zero-reward StepResult.
  StepResult reset(std::uint64_t seed);

  // Applies one planner action (components clamped to [-1,1]). Throws Error
  // when called after termination.
  StepResult step(const Vec3& action, const Vec3& lookat);

  const VoxelGrid& grid() const { return grid_; }
  const VoxelGrid& truth() const { return truth_; }
  const PreparedScene& scene() const { return *scene_; }
  const EnvConfig& config() const { return cfg_; }
  const Bvh& bvh() const { return bvh_; }
  int steps_taken() const { return steps_; }
  bool terminated() const { return terminated_; }
  bool was_reset() const { return has_reset_; }
  double current_height_cap() const;  // cap for the next action
  const Pose& camera_pose() const { return pose_; }
  double face_coverage_now() const;

 private:
  StepResult capture(const Vec3& position, const Vec3& lookat, bool is_reset);

  std::shared_ptr<const PreparedScene> scene_;
  EnvConfig cfg_;
  Intrinsics intr_;
  Bvh bvh_;
  VoxelGrid grid_;   // belief, carved by observations
  VoxelGrid truth_;  // ground-truth occupancy, the collision model
  Pose pose_;
  Rng rng_{0};
  int steps_ = 0;
  bool terminated_ = false;
  bool has_reset_ = false;
  double random_cap_ = 10.0;
};

}  // namespace nbv
