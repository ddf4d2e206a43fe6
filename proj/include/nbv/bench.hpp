#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nbv/env.hpp"
#include "nbv/planners.hpp"

namespace nbv {

// The five benchmark object-center positions.
std::vector<Vec2> default_centers();

// Stable file stem for a (scene, center) ground-truth cache.
std::string cache_stem(const std::string& scene, const Vec2& center);

struct PrepConfig {
  std::vector<std::string> mesh_paths;
  std::string input_dir;      // scanned for .obj/.ply when mesh_paths is empty
  std::string output_dir;
  std::vector<Vec2> centers = default_centers();
  SceneConfig scene;          // object_center is overridden per entry
  int g = 20;
  int n_surface_points = 20000;
  std::uint64_t sample_seed = 7;
};

// One ground-truth cache + placed mesh per (mesh, center); writes
// manifest.json. Per-file failures are logged and the run continues.
int cmd_prep(const PrepConfig& cfg, std::ostream& log);

// A prepped (scene, center) pair as recorded in the manifest.
struct ManifestEntry {
  std::string scene;
  Vec2 center = Vec2::Zero();
  std::string gt_path;
  std::string mesh_path;
  long occupied = 0;
  long visible_faces = 0;
  long points = 0;
};

struct Manifest {
  int g = 20;
  SceneConfig scene;  // shared placement parameters (center varies per entry)
  std::vector<ManifestEntry> entries;
};

Manifest load_manifest(const std::string& cache_dir);  // throws Error

// Bench-level planner: library planners ignore the observation; the extern
// bridge encodes it onto the wire.
using BenchPlanner = std::function<PlannerDecision(PlannerContext&, const Observation&)>;

// Wraps "random" | "frontier" | "greedy" | "extern:<host>:<port>".
// `debug_candidates` has greedy record per-candidate scores into the
// decision (traced as "candidates" rows); other planners ignore it.
BenchPlanner make_bench_planner(const std::string& name, bool debug_candidates = false);

struct StepRow {
  int step = 0;  // 1-based planner step
  double reward = 0.0, coverage_reward = 0.0, penalty = 0.0;
  bool m_col = true;
  long newly_seen_faces = 0;
  double face_coverage = 0.0;
  double cr = 0.0;
  double height_cap = 0.0;
  Vec3 action = Vec3::Zero();
  Vec3 a_prime = Vec3::Zero();
  Vec3 lookat = Vec3::Zero();
  bool fallback = false;
  double env_seconds = 0.0;
  double plan_seconds = 0.0;
};

struct EpisodeRecord {
  std::string scene, planner;
  Vec2 center = Vec2::Zero();
  std::uint64_t seed = 0;
  std::vector<StepRow> steps;
  double final_face_coverage = 0.0;
  double final_cr = 0.0;
  double final_cd_cm = 0.0;
  double auc = 0.0;              // mean CR over planner steps, padded to budget
  int first_target_step = -1;    // first step with face_coverage >= target_mark
  long recon_points = 0;
  double fps_env = 0.0;          // planner time excluded
  double fps_total = 0.0;
  std::string termination;
  bool ok = true;
  std::string error;
};

struct EpisodeParams {
  int views_budget = 30;
  double tau = 1.0;
  double target_mark = 0.9;  // reported crossing, not a stopping rule here
};

// Runs reset + views_budget planner steps (or to termination), tracking the
// reconstruction cloud incrementally. Optionally appends meta/step/final
// JSONL rows to `trace`.
EpisodeRecord run_episode(Env& env, const BenchPlanner& planner, const EpisodeParams& params,
                          std::uint64_t seed, std::ostream* trace);

struct BenchSpec {
  std::string cache_dir;
  std::vector<std::string> scenes;    // empty = every scene in the manifest
  std::vector<std::string> planners = {"greedy"};
  std::vector<Vec2> centers;          // empty = every center in the manifest
  std::vector<std::uint64_t> seeds = {1};
  int views_budget = 30;
  double tau = 1.0;
  std::string output_dir;
  bool write_traces = true;
  bool debug_candidates = false;

  EnvConfig env;  // face_target is forced to 1.0 for full-budget episodes
};

// Episode grid -> steps.csv, episodes.csv, summary.csv (+ traces/*.jsonl).
int cmd_run(const BenchSpec& spec, std::ostream& log);

struct TheoryConfig {
  std::vector<long> ks = {64, 512, 4096, 8000};
  long trials = 200;
  std::uint64_t seed = 7;
  std::string output_dir;
};

// scenario1.csv, scenario2.csv, and a gnuplot-friendly curve.dat.
int cmd_theory(const TheoryConfig& cfg, std::ostream& log);

struct ServeConfig {
  std::string cache_dir;
  std::vector<std::string> scenes;  // empty = all
  std::string host = "127.0.0.1";
  int port = 7447;
  bool stdio = false;
  int max_envs = 64;
  EnvConfig env;
};

int cmd_serve(const ServeConfig& cfg, std::ostream& log);

struct ExportConfig {
  std::string trace_path;
  std::string output_dir;
  bool ply = true;
  bool curve = true;
  bool frames = false;  // PGM gray + PFM depth per step
};

// Re-renders a recorded trace into point clouds / curves / frames.
int cmd_export(const ExportConfig& cfg, std::ostream& log);

}  // namespace nbv
