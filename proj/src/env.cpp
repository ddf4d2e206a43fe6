#include "nbv/env.hpp"

#include <algorithm>
#include <cmath>

namespace nbv {

void EnvConfig::validate() const {
  scene.validate();
  if (g <= 0) throw Error("EnvConfig: g must be positive");
  if (image_height <= 0 || image_width <= 0) throw Error("EnvConfig: bad image size");
  if (max_steps <= 0) throw Error("EnvConfig: max_steps must be positive");
  if (!(face_target > 0.0) || face_target > 1.0)
    throw Error("EnvConfig: face_target must lie in (0, 1]");
  if (!(coverage_scale > 0.0)) throw Error("EnvConfig: coverage_scale must be positive");
  if (penalty < 0.0) throw Error("EnvConfig: negative penalty");
  if (floor_clearance < 0.0) throw Error("EnvConfig: negative floor clearance");
  if (height_schedule.empty() || height_schedule.front().from_step != 0)
    throw Error("EnvConfig: height schedule must start at step 0");
  for (std::size_t i = 0; i < height_schedule.size(); ++i) {
    if (!(height_schedule[i].cap > 0.0)) throw Error("EnvConfig: non-positive height cap");
    if (i > 0 && height_schedule[i].from_step <= height_schedule[i - 1].from_step)
      throw Error("EnvConfig: height schedule steps must increase");
  }
}

double height_cap(const EnvConfig& cfg, int step_index) {
  double cap = cfg.height_schedule.front().cap;
  for (const HeightPhase& p : cfg.height_schedule) {
    if (step_index >= p.from_step) cap = p.cap;
  }
  return cap;
}

Vec3 scale_action(const EnvConfig& cfg, const Vec3& a) {
  const double s = cfg.scene.scene_size;
  return Vec3(a.x() * s / 2.0, a.y() * s / 2.0, (a.z() + 1.0) / 2.0 * s);
}

Vec3 unscale_action(const EnvConfig& cfg, const Vec3& p) {
  const double s = cfg.scene.scene_size;
  const Vec3 a(p.x() * 2.0 / s, p.y() * 2.0 / s, p.z() * 2.0 / s - 1.0);
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

namespace {

const TriangleMesh& require_mesh(const std::shared_ptr<const PreparedScene>& scene) {
  if (!scene) throw Error("Env: null scene");
  return scene->mesh;
}

}  // namespace

Env::Env(std::shared_ptr<const PreparedScene> scene, const EnvConfig& cfg)
    : scene_(std::move(scene)), cfg_(cfg), bvh_(require_mesh(scene_)) {
  cfg_.validate();
  if (scene_->gt.g != cfg_.g) throw Error("Env: ground truth grid dimension mismatch");
  intr_.height = cfg_.image_height;
  intr_.width = cfg_.image_width;
  intr_.vertical_fov = cfg_.vertical_fov;
  intr_.max_range = cfg_.max_range;
  grid_ = VoxelGrid(cfg_.g, scene_->gt.origin, scene_->gt.voxel_size);
  truth_ = VoxelGrid(cfg_.g, scene_->gt.origin, scene_->gt.voxel_size);
  for (std::size_t i = 0; i < truth_.size(); ++i)
    truth_.set_state(i, scene_->gt.occupied[i] ? VoxelState::occupied : VoxelState::free);
}

double Env::current_height_cap() const {
  if (cfg_.height_mode == HeightMode::random_fixed) return random_cap_;
  return height_cap(cfg_, std::min(steps_, cfg_.max_steps - 1));
}

double Env::face_coverage_now() const {
  return face_coverage(grid_, scene_->gt.visible_faces, scene_->gt.total_visible_faces);
}

StepResult Env::reset(std::uint64_t seed) {
  rng_ = Rng(seed);
  grid_ = VoxelGrid(cfg_.g, scene_->gt.origin, scene_->gt.voxel_size);
  steps_ = 0;
  terminated_ = false;
  has_reset_ = true;

  const double s = cfg_.scene.scene_size;
  const double cap0 = height_cap(cfg_, 0);
  Vec3 start;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 10000) throw Error("Env::reset: cannot sample a collision-free start");
    start = Vec3(rng_.uniform(-s / 2.0, s / 2.0), rng_.uniform(-s / 2.0, s / 2.0),
                 rng_.uniform(std::max(cfg_.floor_clearance, 0.0), std::min(cap0, s)));
    const auto v = world_to_voxel(grid_, start);
    if (!v) continue;
    if (scene_->gt.occupied[grid_.index(*v)]) continue;
    // Keep the start's voxel center inside the cap so the first projection
    // is the identity for in-place actions.
    const double cz = grid_.voxel_center(*v).z();
    if (cz < cfg_.floor_clearance || cz > cap0) continue;
    break;
  }
  if (cfg_.height_mode == HeightMode::random_fixed)
    random_cap_ = rng_.uniform(start.z(), cfg_.random_height_max);

  return capture(start, scene_->gt.object_box.center(), true);
}

StepResult Env::step(const Vec3& action, const Vec3& lookat) {
  if (!has_reset_) throw Error("Env::step: reset first");
  if (terminated_) throw Error("EPISODE_DONE");
  if (!action.allFinite() || !lookat.allFinite())
    throw Error("Env::step: non-finite action or lookat");

  const Vec3 clamped = action.cwiseMax(-1.0).cwiseMin(1.0);
  const bool was_clamped = (clamped.array() != action.array()).any();
  const Vec3 p = scale_action(cfg_, clamped);
  const double cap = current_height_cap();

  // Collision mask on the raw scaled position: inside the grid, truly free,
  // and under the cap.
  bool m_col = p.z() <= cap;
  if (m_col) {
    const auto v = world_to_voxel(truth_, p);
    m_col = v && truth_.state(*v) == VoxelState::free;
  }

  Vec3 a_prime;
  try {
    a_prime = nearest_collision_free(truth_, p, cap, cfg_.floor_clearance);
  } catch (const Error&) {
    terminated_ = true;
    StepResult res;
    res.terminated = true;
    res.termination_reason = "unschedulable";
    res.raw_position = p;
    res.m_col = false;
    res.reward = -cfg_.penalty;
    res.penalty = cfg_.penalty;
    res.face_coverage = face_coverage_now();
    return res;
  }

  StepResult res = capture(a_prime, lookat, false);
  res.raw_position = p;
  res.m_col = m_col;
  res.action_clamped = was_clamped;

  const bool face_mode = cfg_.reward_mode == RewardMode::faces;
  const double denom = face_mode ? 6.0 * static_cast<double>(grid_.size())
                                 : static_cast<double>(grid_.size());
  const double gain = face_mode ? static_cast<double>(res.newly_seen_faces)
                                : static_cast<double>(res.integrate.newly_occupied);
  res.coverage_reward = m_col ? gain / denom * cfg_.coverage_scale : 0.0;
  const bool penalized = res.coverage_reward == 0.0 || p.z() > cap || !m_col;
  res.penalty = penalized ? cfg_.penalty : 0.0;
  res.reward = res.coverage_reward - res.penalty;

  ++steps_;
  res.obs.step_index = steps_;
  res.obs.vector[5] = current_height_cap();

  if (res.face_coverage >= cfg_.face_target) {
    terminated_ = true;
    res.termination_reason = "face_target";
  } else if (steps_ >= cfg_.max_steps) {
    terminated_ = true;
    res.termination_reason = "max_steps";
  }
  res.terminated = terminated_;
  return res;
}

StepResult Env::capture(const Vec3& position, const Vec3& lookat, bool is_reset) {
  pose_ = pose_from_lookat(position, lookat);
  const RenderResult hits = render_hits(scene_->mesh, bvh_, intr_, pose_);
  carve_free_space(grid_, hits.depth, intr_, pose_, cfg_.max_range);
  std::vector<Vec3> points = unproject(hits.depth, intr_, pose_);

  StepResult res;
  res.integrate = integrate_observation(grid_, points, position);
  res.points = std::move(points);
  res.newly_seen_faces = res.integrate.newly_seen_faces;
  res.face_coverage = face_coverage_now();
  res.a_prime = position;
  if (is_reset) res.raw_position = position;

  res.obs.gray = shade_hits(scene_->mesh, hits, intr_, pose_);
  res.obs.grid = grid_;
  res.obs.lookat = lookat;
  res.obs.step_index = steps_;
  res.obs.vector << position.x(), position.y(), position.z(), pose_.pitch, pose_.yaw,
      current_height_cap();

  try {
    res.gt_lookat_label = gt_lookat(scene_->gt, grid_.face_masks());
    res.gt_lookat_valid = true;
  } catch (const Error&) {
    res.gt_lookat_valid = false;
  }
  return res;
}

}  // namespace nbv
