#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nbv/bench.hpp"
#include "nbv/mesh_factory.hpp"
#include "nbv/util.hpp"

namespace {

// "x,y" -> Vec2; throws CLI::ValidationError on anything else.
nbv::Vec2 parse_center(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw CLI::ValidationError("--centers", "expected 'x,y'");
  try {
    return nbv::Vec2(std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1)));
  } catch (const std::exception&) {
    throw CLI::ValidationError("--centers", "expected numbers in 'x,y'");
  }
}

std::vector<nbv::Vec2> parse_centers(const std::vector<std::string>& raw) {
  std::vector<nbv::Vec2> out;
  out.reserve(raw.size());
  for (const std::string& s : raw) out.push_back(parse_center(s));
  return out;
}

int cmd_gen_assets(const std::string& out_dir, std::ostream& log) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    log << "gen-assets: cannot create '" << out_dir << "': " << ec.message() << "\n";
    return 2;
  }
  for (const nbv::BenchMesh& bm : nbv::benchmark_meshes()) {
    const std::string path = out_dir + "/" + bm.name + ".obj";
    nbv::save_obj(path, bm.mesh);
    log << "gen-assets: " << path << " (" << bm.mesh.triangles.size() << " triangles)\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Voxel-coverage next-best-view benchmark"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from an INI/TOML file");
  app.get_formatter()->column_width(34);

  std::ostream& log = std::cout;

  // ---- prep ----
  nbv::PrepConfig prep;
  std::vector<std::string> prep_centers;
  auto* prep_cmd = app.add_subcommand("prep", "Build ground-truth caches from meshes");
  prep_cmd->add_option("--mesh", prep.mesh_paths, "Mesh files (.obj/.ply)");
  prep_cmd->add_option("--input", prep.input_dir, "Directory scanned for meshes");
  prep_cmd->add_option("--out", prep.output_dir, "Cache output directory")->required();
  prep_cmd->add_option("--centers", prep_centers, "Object centers as 'x,y' (default: the 5 benchmark positions)");
  prep_cmd->add_option("--g", prep.g, "Grid resolution per axis");
  prep_cmd->add_option("--points", prep.n_surface_points, "Ground-truth surface samples");
  prep_cmd->add_option("--sample-seed", prep.sample_seed, "Surface sampling seed");
  prep_cmd->add_option("--scene-size", prep.scene.scene_size, "Cubic scene extent (m)");
  prep_cmd->add_option("--extent", prep.scene.target_extent, "Object longest extent (m)");
  prep_cmd->add_option("--ground-height", prep.scene.ground_height, "Object base height (m)");

  // ---- run ----
  nbv::BenchSpec spec;
  std::vector<std::string> run_centers;
  double fov_deg = 60.0;
  int resolution = 300;
  bool no_traces = false;
  auto* run_cmd = app.add_subcommand("run", "Run planner x scene x center episodes");
  run_cmd->add_option("--cache", spec.cache_dir, "Prepped cache directory")->required();
  run_cmd->add_option("--out", spec.output_dir, "Results directory")->required();
  run_cmd->add_option("--planner", spec.planners,
                      "random | frontier | greedy | extern:<host>:<port>");
  run_cmd->add_option("--scenes", spec.scenes, "Scene subset (default: all in the manifest)");
  run_cmd->add_option("--centers", run_centers, "Center subset as 'x,y'");
  run_cmd->add_option("--seed", spec.seeds, "Episode seeds");
  run_cmd->add_option("--budget", spec.views_budget, "Planner views per episode");
  run_cmd->add_option("--tau", spec.tau, "Coverage-ratio distance threshold (m)");
  run_cmd->add_option("--max-steps", spec.env.max_steps, "Env step limit");
  run_cmd->add_option("--fov-deg", fov_deg, "Vertical field of view (degrees)");
  run_cmd->add_option("--resolution", resolution, "Square image side (pixels)");
  run_cmd->add_flag("--no-traces", no_traces, "Skip per-episode JSONL traces");
  run_cmd->add_flag("--debug-candidates", spec.debug_candidates,
                    "Trace greedy candidate scores as JSONL rows");
  std::string run_reward_mode = "faces";
  run_cmd->add_option("--reward-mode", run_reward_mode, "faces | points")
      ->check(CLI::IsMember({"faces", "points"}));

  // ---- theory ----
  nbv::TheoryConfig theory;
  auto* theory_cmd = app.add_subcommand("theory", "Coupon-collector experiments");
  theory_cmd->add_option("--k", theory.ks, "Cube counts");
  theory_cmd->add_option("--trials", theory.trials, "Trials per k");
  theory_cmd->add_option("--seed", theory.seed, "Base seed (trial i uses seed+i)");
  theory_cmd->add_option("--out", theory.output_dir, "Output directory")->required();

  // ---- serve ----
  nbv::ServeConfig serve;
  auto* serve_cmd = app.add_subcommand("serve", "Environment server (NDJSON over TCP/stdio)");
  serve_cmd->add_option("--cache", serve.cache_dir, "Prepped cache directory")->required();
  serve_cmd->add_option("--scenes", serve.scenes, "Scene subset");
  serve_cmd->add_option("--host", serve.host, "Bind address (or NBV_BIND env var)")
      ->envname("NBV_BIND");
  serve_cmd->add_option("--port", serve.port, "Port (0 = ephemeral)");
  serve_cmd->add_flag("--stdio", serve.stdio, "Serve stdin/stdout instead of TCP");
  serve_cmd->add_option("--max-envs", serve.max_envs, "Concurrent environment limit");
  serve_cmd->add_option("--face-target", serve.env.face_target,
                        "Episode face-coverage termination threshold");
  serve_cmd->add_option("--max-steps", serve.env.max_steps, "Env step limit");
  std::string serve_reward_mode = "faces";
  serve_cmd->add_option("--reward-mode", serve_reward_mode, "faces | points")
      ->check(CLI::IsMember({"faces", "points"}));

  // ---- export ----
  nbv::ExportConfig exp;
  std::vector<std::string> formats = {"ply", "curve"};
  auto* export_cmd = app.add_subcommand("export", "Re-render a trace into artifacts");
  export_cmd->add_option("--trace", exp.trace_path, "Episode trace (.jsonl)")->required();
  export_cmd->add_option("--out", exp.output_dir, "Output directory")->required();
  export_cmd->add_option("--formats", formats, "Any of: ply, curve, frames")
      ->check(CLI::IsMember({"ply", "curve", "frames"}));

  // ---- gen-assets ----
  std::string assets_out = "assets/meshes";
  auto* gen_cmd = app.add_subcommand("gen-assets", "Write the built-in benchmark meshes");
  gen_cmd->add_option("--out", assets_out, "Mesh output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // bad flags/config file = invalid configuration
  }

  try {
    if (prep_cmd->parsed()) {
      if (!prep_centers.empty()) prep.centers = parse_centers(prep_centers);
      return nbv::cmd_prep(prep, log);
    }
    if (run_cmd->parsed()) {
      spec.centers = parse_centers(run_centers);
      spec.write_traces = !no_traces;
      spec.env.vertical_fov = fov_deg * EIGEN_PI / 180.0;
      spec.env.image_height = resolution;
      spec.env.image_width = resolution;
      spec.env.reward_mode =
          run_reward_mode == "points" ? nbv::RewardMode::points : nbv::RewardMode::faces;
      return nbv::cmd_run(spec, log);
    }
    if (theory_cmd->parsed()) return nbv::cmd_theory(theory, log);
    if (serve_cmd->parsed()) {
      serve.env.reward_mode =
          serve_reward_mode == "points" ? nbv::RewardMode::points : nbv::RewardMode::faces;
      return nbv::cmd_serve(serve, std::cerr);
    }
    if (export_cmd->parsed()) {
      exp.ply = exp.curve = exp.frames = false;
      for (const std::string& f : formats) {
        if (f == "ply") exp.ply = true;
        if (f == "curve") exp.curve = true;
        if (f == "frames") exp.frames = true;
      }
      return nbv::cmd_export(exp, log);
    }
    if (gen_cmd->parsed()) return cmd_gen_assets(assets_out, log);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const nbv::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
