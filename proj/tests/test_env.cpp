#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "nbv/env.hpp"
#include "nbv/mesh_factory.hpp"
#include "nbv/scene.hpp"
#include "nbv/types.hpp"

using namespace nbv;

namespace {

EnvConfig small_cfg() {
  EnvConfig cfg;
  cfg.image_height = 64;  // keep unit tests quick; geometry is resolution-free
  cfg.image_width = 64;
  return cfg;
}

std::shared_ptr<const PreparedScene> cube_scene() {
  static const auto scene = std::make_shared<const PreparedScene>(
      prep_scene(make_box(Vec3::Zero(), Vec3::Ones()), SceneConfig{}, 20, 2000, 3));
  return scene;
}

Vec3 action_for(const EnvConfig& cfg, const Vec3& world) { return unscale_action(cfg, world); }

}  // namespace

TEST_CASE("action scaling: corners, center, and round trip") {
  const EnvConfig cfg;
  CHECK(scale_action(cfg, Vec3(-1, -1, -1)) == Vec3(-10, -10, 0));
  CHECK(scale_action(cfg, Vec3(1, 1, 1)) == Vec3(10, 10, 20));
  CHECK(scale_action(cfg, Vec3(0, 0, 0)) == Vec3(0, 0, 10));

  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Vec3 a(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    CHECK((unscale_action(cfg, scale_action(cfg, a)) - a).norm() < 1e-12);
  }
  // Out-of-volume positions clamp back into the action box.
  CHECK(unscale_action(cfg, Vec3(99, -99, 99)) == Vec3(1, -1, 1));
}

TEST_CASE("height schedule: default phases and custom validation") {
  const EnvConfig cfg;
  CHECK(height_cap(cfg, 0) == 10.0);
  CHECK(height_cap(cfg, 39) == 10.0);
  CHECK(height_cap(cfg, 40) == 5.0);
  CHECK(height_cap(cfg, 44) == 5.0);
  CHECK(height_cap(cfg, 45) == 2.0);
  CHECK(height_cap(cfg, 49) == 2.0);

  EnvConfig late = small_cfg();
  late.height_schedule = {{5, 10.0}};
  CHECK_THROWS_AS(late.validate(), Error);
  EnvConfig repeat = small_cfg();
  repeat.height_schedule = {{0, 10.0}, {0, 5.0}};
  CHECK_THROWS_AS(repeat.validate(), Error);
  EnvConfig zero_cap = small_cfg();
  zero_cap.height_schedule = {{0, 0.0}};
  CHECK_THROWS_AS(zero_cap.validate(), Error);
}

TEST_CASE("config validation rejects nonsense") {
  EnvConfig cfg = small_cfg();
  cfg.face_target = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_cfg();
  cfg.face_target = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_cfg();
  cfg.max_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_cfg();
  cfg.penalty = -0.01;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_cfg();
  cfg.floor_clearance = -1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("env construction: dimension mismatch and null scene rejected") {
  EnvConfig cfg = small_cfg();
  cfg.g = 16;
  CHECK_THROWS_AS(Env(cube_scene(), cfg), Error);
  CHECK_THROWS_AS(Env(nullptr, small_cfg()), Error);
}

TEST_CASE("reset: deterministic, collision-free, aimed at the object") {
  Env env(cube_scene(), small_cfg());
  const StepResult a = env.reset(7);
  const StepResult b = env.reset(7);
  CHECK(a.obs.vector == b.obs.vector);
  CHECK(a.obs.gray.value == b.obs.gray.value);
  CHECK(serialize_grid(a.obs.grid) == serialize_grid(b.obs.grid));
  CHECK(a.face_coverage == b.face_coverage);

  const StepResult c = env.reset(8);
  CHECK((a.obs.vector.head<3>() - c.obs.vector.head<3>()).norm() > 1e-9);

  // Start position: truly free voxel, inside height bounds, zero reward.
  const Vec3 pos = c.obs.vector.head<3>();
  const auto v = world_to_voxel(env.truth(), pos);
  REQUIRE(v.has_value());
  CHECK(env.truth().state(*v) == VoxelState::free);
  CHECK(pos.z() >= 0.0);
  CHECK(pos.z() <= 10.0);
  CHECK(c.reward == 0.0);
  CHECK(c.penalty == 0.0);
  CHECK_FALSE(c.terminated);
  CHECK(c.obs.step_index == 0);

  // Oriented at the object box center.
  const Vec3 target = cube_scene()->gt.object_box.center();
  const Pose& pose = env.camera_pose();
  CHECK((pose.forward() - (target - pos).normalized()).norm() < 1e-9);

  // First view of an 8 m cube from anywhere in the frame sees something.
  CHECK(c.newly_seen_faces > 0);
  CHECK(c.face_coverage > 0.0);
  CHECK(c.gt_lookat_valid);
}

TEST_CASE("step: requires reset, rejects non-finite input") {
  Env env(cube_scene(), small_cfg());
  CHECK_THROWS_AS((void)env.step(Vec3::Zero(), Vec3::Zero()), Error);
  env.reset(1);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS((void)env.step(Vec3(nan, 0, 0), Vec3(0, 0, 5)), Error);
  CHECK_THROWS_AS((void)env.step(Vec3(0, 0, 0), Vec3(nan, 0, 5)), Error);
}

TEST_CASE("step: coverage reward is newly seen faces over 6 g^3, scaled") {
  Env env(cube_scene(), small_cfg());
  env.reset(11);
  const Vec3 lookat = cube_scene()->gt.object_box.center();
  const StepResult res = env.step(action_for(env.config(), Vec3(-8, -8, 6)), lookat);
  CHECK(res.m_col);
  CHECK(res.newly_seen_faces > 0);
  const double expect = static_cast<double>(res.newly_seen_faces) / (6.0 * 8000.0) * 0.3;
  CHECK(res.coverage_reward == doctest::Approx(expect).epsilon(1e-15));
  CHECK(res.penalty == 0.0);
  CHECK(res.reward == res.coverage_reward);
  CHECK(res.newly_seen_faces == res.integrate.newly_seen_faces);
  CHECK_FALSE(res.points.empty());
  CHECK(res.obs.step_index == 1);
}

TEST_CASE("step: points reward mode pays for newly occupied voxels") {
  EnvConfig cfg = small_cfg();
  cfg.reward_mode = RewardMode::points;
  Env env(cube_scene(), cfg);
  env.reset(11);
  const StepResult res =
      env.step(action_for(cfg, Vec3(-8, -8, 6)), cube_scene()->gt.object_box.center());
  REQUIRE(res.m_col);
  const double expect = static_cast<double>(res.integrate.newly_occupied) / 8000.0 * 0.3;
  CHECK(res.coverage_reward == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("step: collision masks the reward and relocates the capture") {
  Env env(cube_scene(), small_cfg());
  env.reset(4);
  // Dead center of the cube: truly occupied.
  const StepResult res =
      env.step(action_for(env.config(), Vec3(0, 0, 5)), Vec3(0, 0, 5));
  CHECK_FALSE(res.m_col);
  CHECK(res.coverage_reward == 0.0);
  CHECK(res.penalty == 0.01);
  CHECK(res.reward == -0.01);
  CHECK(res.raw_position == Vec3(0, 0, 5));
  CHECK((res.a_prime - res.raw_position).norm() > 0.5);
  const auto v = world_to_voxel(env.truth(), res.a_prime);
  REQUIRE(v.has_value());
  CHECK(env.truth().state(*v) == VoxelState::free);
  // The observation was captured from the relocated viewpoint.
  CHECK(res.obs.vector.head<3>() == res.a_prime);
  // Faces can still be newly seen from a_prime; the mask only kills payment.
  CHECK(res.reward < 0.0);
}

TEST_CASE("step: height violation is penalized even when the air is empty") {
  Env env(cube_scene(), small_cfg());
  env.reset(4);
  const StepResult res = env.step(Vec3(0.9, 0.9, 1.0), Vec3(0, 0, 5));  // z -> 20
  CHECK(res.raw_position.z() == 20.0);
  CHECK_FALSE(res.m_col);
  CHECK(res.coverage_reward == 0.0);
  CHECK(res.penalty == 0.01);
  CHECK(res.a_prime.z() <= 10.0 + 1e-12);
}

TEST_CASE("step: revisiting a viewpoint earns the idle penalty") {
  Env env(cube_scene(), small_cfg());
  env.reset(9);
  const Vec3 a = action_for(env.config(), Vec3(-7, 6, 4));
  const Vec3 lookat = cube_scene()->gt.object_box.center();
  const StepResult first = env.step(a, lookat);
  CHECK(first.m_col);
  const StepResult again = env.step(a, lookat);
  CHECK(again.m_col);
  CHECK(again.newly_seen_faces == 0);
  CHECK(again.coverage_reward == 0.0);
  CHECK(again.penalty == 0.01);
  CHECK(again.reward == -0.01);
}

TEST_CASE("step: clamp flag reports out-of-box actions") {
  Env env(cube_scene(), small_cfg());
  env.reset(2);
  CHECK(env.step(Vec3(2.0, 0, 0), Vec3(0, 0, 5)).action_clamped);
  CHECK_FALSE(env.step(Vec3(0.5, 0.25, 0), Vec3(0, 0, 5)).action_clamped);
}

TEST_CASE("episode: coverage monotone, rewards bounded, budget termination") {
  EnvConfig cfg = small_cfg();
  cfg.max_steps = 12;
  Env env(cube_scene(), cfg);
  Rng rng(31);
  StepResult res = env.reset(31);
  double last_cov = res.face_coverage;
  double reward_sum = 0.0;
  int steps = 0;
  while (!res.terminated) {
    const Vec3 a(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    res = env.step(a, cube_scene()->gt.object_box.center());
    ++steps;
    CHECK(res.face_coverage >= last_cov);
    last_cov = res.face_coverage;
    reward_sum += res.coverage_reward;
    CHECK(res.coverage_reward >= 0.0);
    CHECK(res.obs.step_index == steps);
  }
  CHECK(reward_sum <= 0.3 + 1e-12);
  CHECK(steps <= cfg.max_steps);
  if (res.termination_reason == "max_steps") CHECK(steps == cfg.max_steps);
  CHECK((res.termination_reason == "max_steps" || res.termination_reason == "face_target"));
  CHECK(env.terminated());
  CHECK_THROWS_WITH_AS((void)env.step(Vec3::Zero(), Vec3(0, 0, 5)), "EPISODE_DONE", Error);
}

TEST_CASE("episode: face target ends the run early") {
  EnvConfig cfg = small_cfg();
  cfg.face_target = 0.05;
  Env env(cube_scene(), cfg);
  env.reset(13);
  const StepResult res =
      env.step(action_for(cfg, Vec3(-8, -8, 7)), cube_scene()->gt.object_box.center());
  CHECK(res.face_coverage >= 0.05);
  CHECK(res.terminated);
  CHECK(res.termination_reason == "face_target");
}

TEST_CASE("episode: cap schedule that closes every voxel ends unschedulable") {
  EnvConfig cfg = small_cfg();
  // After two actions the cap drops below the lowest voxel center (0.5).
  cfg.height_schedule = {{0, 10.0}, {2, 0.4}};
  Env env(cube_scene(), cfg);
  env.reset(17);
  (void)env.step(Vec3(0.8, 0.8, -0.4), Vec3(0, 0, 5));
  (void)env.step(Vec3(0.7, 0.8, -0.4), Vec3(0, 0, 5));
  const StepResult res = env.step(Vec3(0.6, 0.8, -0.4), Vec3(0, 0, 5));
  CHECK(res.terminated);
  CHECK(res.termination_reason == "unschedulable");
  CHECK(res.reward == -0.01);
  CHECK_FALSE(res.m_col);
  CHECK_THROWS_AS((void)env.step(Vec3::Zero(), Vec3(0, 0, 5)), Error);
}

TEST_CASE("observation vector layout: position, pitch, yaw, cap") {
  Env env(cube_scene(), small_cfg());
  env.reset(23);
  const Vec3 world(-6, 5, 4);
  const StepResult res = env.step(action_for(env.config(), world), Vec3(0, 0, 5));
  REQUIRE(res.m_col);
  CHECK((res.obs.vector.head<3>() - world).norm() < 1e-9);
  const Pose expect = pose_from_lookat(res.a_prime, Vec3(0, 0, 5));
  CHECK(res.obs.vector[3] == doctest::Approx(expect.pitch).epsilon(1e-12));
  CHECK(res.obs.vector[4] == doctest::Approx(expect.yaw).epsilon(1e-12));
  CHECK(res.obs.vector[5] == 10.0);  // cap for the next action
  CHECK(res.obs.lookat == Vec3(0, 0, 5));
  CHECK(res.obs.gray.height == 64);
  CHECK(res.obs.gray.width == 64);
  // Belief snapshot matches the env grid.
  CHECK(serialize_grid(res.obs.grid) == serialize_grid(env.grid()));
}

TEST_CASE("random_fixed height mode: cap drawn once per episode above the start") {
  EnvConfig cfg = small_cfg();
  cfg.height_mode = HeightMode::random_fixed;
  cfg.random_height_max = 10.0;
  Env env(cube_scene(), cfg);
  const StepResult r = env.reset(29);
  const double cap = env.current_height_cap();
  CHECK(cap >= r.obs.vector[2]);
  CHECK(cap <= 10.0);
  (void)env.step(Vec3(0.1, 0.1, -0.5), Vec3(0, 0, 5));
  CHECK(env.current_height_cap() == cap);  // fixed for the whole episode
}
