#include "nbv/bench.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "nbv/metrics.hpp"
#include "nbv/protocol.hpp"
#include "nbv/theory.hpp"
#include "nbv/util.hpp"

namespace nbv {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<Vec2> default_centers() {
  return {Vec2(0, 0), Vec2(4, 4), Vec2(4, -4), Vec2(-4, 4), Vec2(-4, -4)};
}

std::string cache_stem(const std::string& scene, const Vec2& center) {
  return scene + "__cx" + format_double(center.x()) + "_cy" + format_double(center.y());
}

namespace {

json vec2_json(const Vec2& v) { return json::array({v.x(), v.y()}); }
json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

std::string sanitize_name(const std::string& name) {
  std::string out = name;
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '-' || c == '.';
    if (!ok) c = '-';
  }
  return out;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

double seconds_between(const std::chrono::steady_clock::time_point& a,
                       const std::chrono::steady_clock::time_point& b) {
  return std::chrono::duration<double>(b - a).count();
}

std::string lower_ext(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace

int cmd_prep(const PrepConfig& cfg, std::ostream& log) {
  std::vector<std::string> paths = cfg.mesh_paths;
  if (paths.empty() && !cfg.input_dir.empty()) {
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(cfg.input_dir, ec)) {
      if (!e.is_regular_file()) continue;
      const std::string ext = lower_ext(e.path());
      if (ext == ".obj" || ext == ".ply") paths.push_back(e.path().string());
    }
    if (ec) {
      log << "prep: cannot scan '" << cfg.input_dir << "': " << ec.message() << "\n";
      return 2;
    }
    std::sort(paths.begin(), paths.end());
  }
  if (paths.empty()) {
    log << "prep: no input meshes\n";
    return 2;
  }
  if (cfg.output_dir.empty() || cfg.centers.empty() || cfg.g <= 0 || cfg.n_surface_points <= 0) {
    log << "prep: invalid configuration\n";
    return 2;
  }
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) {
    log << "prep: cannot create '" << cfg.output_dir << "': " << ec.message() << "\n";
    return 2;
  }

  json entries = json::array();
  json failures = json::array();
  int n_ok = 0, n_fail = 0;
  for (const std::string& path : paths) {
    const std::string scene = fs::path(path).stem().string();
    TriangleMesh raw;
    try {
      raw = load_mesh(path);
    } catch (const Error& e) {
      ++n_fail;
      failures.push_back(json{{"mesh", path}, {"error", e.what()}});
      log << "prep: FAILED " << path << ": " << e.what() << "\n";
      continue;
    }
    for (const Vec2& center : cfg.centers) {
      const std::string stem = cache_stem(scene, center);
      try {
        SceneConfig sc = cfg.scene;
        sc.object_center = center;
        const PreparedScene prepped =
            prep_scene(raw, sc, cfg.g, cfg.n_surface_points, cfg.sample_seed);
        const std::string gt_rel = stem + ".nbvg";
        const std::string mesh_rel = stem + ".obj";
        save_gt(cfg.output_dir + "/" + gt_rel, prepped.gt);
        save_obj(cfg.output_dir + "/" + mesh_rel, prepped.mesh);
        entries.push_back(json{{"scene", scene},
                               {"center", vec2_json(center)},
                               {"gt", gt_rel},
                               {"mesh", mesh_rel},
                               {"occupied", prepped.gt.occupied_count()},
                               {"visible_faces", prepped.gt.total_visible_faces},
                               {"points", static_cast<long>(prepped.gt.surface_points.size())}});
        ++n_ok;
        log << "prep: " << stem << ": occupied=" << prepped.gt.occupied_count()
            << " visible_faces=" << prepped.gt.total_visible_faces
            << " points=" << prepped.gt.surface_points.size() << "\n";
      } catch (const Error& e) {
        ++n_fail;
        failures.push_back(
            json{{"mesh", path}, {"center", vec2_json(center)}, {"error", e.what()}});
        log << "prep: FAILED " << stem << ": " << e.what() << "\n";
      }
    }
  }

  json manifest;
  manifest["version"] = 1;
  manifest["g"] = cfg.g;
  manifest["scene_size"] = cfg.scene.scene_size;
  manifest["target_extent"] = cfg.scene.target_extent;
  manifest["ground_height"] = cfg.scene.ground_height;
  manifest["n_surface_points"] = cfg.n_surface_points;
  manifest["sample_seed"] = cfg.sample_seed;
  manifest["entries"] = entries;
  manifest["failures"] = failures;
  {
    std::ofstream out(cfg.output_dir + "/manifest.json");
    if (!out) {
      log << "prep: cannot write manifest\n";
      return 2;
    }
    out << manifest.dump(2) << "\n";
  }
  log << "prep: " << n_ok << " caches, " << n_fail << " failures\n";
  return n_fail == 0 ? 0 : 1;
}

Manifest load_manifest(const std::string& cache_dir) {
  const std::string path = cache_dir + "/manifest.json";
  std::ifstream in(path);
  if (!in) throw Error(path + ": cannot open");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
  Manifest m;
  try {
    if (j.value("version", 0) != 1) throw Error(path + ": unsupported manifest version");
    m.g = j.at("g").get<int>();
    m.scene.scene_size = j.at("scene_size").get<double>();
    m.scene.target_extent = j.at("target_extent").get<double>();
    m.scene.ground_height = j.at("ground_height").get<double>();
    for (const json& e : j.at("entries")) {
      ManifestEntry me;
      me.scene = e.at("scene").get<std::string>();
      me.center = Vec2(e.at("center").at(0).get<double>(), e.at("center").at(1).get<double>());
      me.gt_path = cache_dir + "/" + e.at("gt").get<std::string>();
      me.mesh_path = cache_dir + "/" + e.at("mesh").get<std::string>();
      me.occupied = e.at("occupied").get<long>();
      me.visible_faces = e.at("visible_faces").get<long>();
      me.points = e.at("points").get<long>();
      m.entries.push_back(std::move(me));
    }
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
  return m;
}

namespace {

bool read_vec3_field(const json& j, const char* key, Vec3& out) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3) return false;
  for (int i = 0; i < 3; ++i) {
    if (!j[key][static_cast<std::size_t>(i)].is_number()) return false;
    out[i] = j[key][static_cast<std::size_t>(i)].get<double>();
  }
  return true;
}

}  // namespace

BenchPlanner make_bench_planner(const std::string& name, bool debug_candidates) {
  if (name.rfind("extern:", 0) == 0) {
    const std::string addr = name.substr(7);
    const std::size_t colon = addr.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 >= addr.size())
      throw Error("extern planner address must be host:port, got '" + addr + "'");
    const std::string host = addr.substr(0, colon);
    int port = 0;
    try {
      port = std::stoi(addr.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error("extern planner: bad port in '" + addr + "'");
    }
    auto client = std::make_shared<TcpClient>(host, port);
    return [client](PlannerContext& ctx, const Observation& obs) {
      json req;
      req["type"] = "decide";
      req["step_index"] = ctx.step_index;
      req["height_cap"] = ctx.height_cap;
      req["obs"] = observation_to_json(obs);
      const json resp = client->call(req);
      if (resp.value("type", "") != "decision")
        throw Error("extern planner: expected a 'decision' response");
      PlannerDecision d;
      if (!read_vec3_field(resp, "action", d.action) ||
          !read_vec3_field(resp, "lookat", d.lookat))
        throw Error("extern planner: decision lacks action/lookat arrays");
      return d;
    };
  }
  if (name == "greedy" && debug_candidates) {
    GreedyParams params;
    params.collect_debug = true;
    return [params](PlannerContext& ctx, const Observation&) {
      return plan_greedy_oracle(ctx, params);
    };
  }
  PlannerFn fn = make_planner(name);
  return [fn](PlannerContext& ctx, const Observation&) { return fn(ctx); };
}

EpisodeRecord run_episode(Env& env, const BenchPlanner& planner, const EpisodeParams& params,
                          std::uint64_t seed, std::ostream* trace) {
  using clock = std::chrono::steady_clock;
  if (params.views_budget < 1) throw Error("run_episode: views_budget must be >= 1");
  if (params.views_budget > env.config().max_steps)
    throw Error("run_episode: views_budget exceeds max_steps");

  EpisodeRecord rec;
  rec.seed = seed;

  StepResult current = env.reset(seed);
  CoverageTracker tracker(env.scene().gt.surface_points, params.tau);
  tracker.add_view(current.points);
  rec.final_face_coverage = current.face_coverage;
  if (trace) {
    json row;
    row["type"] = "reset";
    row["seed"] = seed;
    row["position"] = vec3_json(current.a_prime);
    row["lookat"] = vec3_json(current.obs.lookat);
    row["yaw"] = env.camera_pose().yaw;
    row["pitch"] = env.camera_pose().pitch;
    row["face_coverage"] = current.face_coverage;
    row["cr"] = tracker.coverage();
    row["points"] = current.points.size();
    *trace << row.dump() << "\n";
  }

  Rng planner_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  double env_time = 0.0, plan_time = 0.0;
  std::vector<double> cr_curve;
  try {
    for (int stepno = 1; stepno <= params.views_budget; ++stepno) {
      PlannerContext ctx{env.grid(),    env.scene().gt,           env.scene().mesh,
                         env.bvh(),     env.config(),             env.current_height_cap(),
                         env.steps_taken(), planner_rng};
      const auto t0 = clock::now();
      const PlannerDecision dec = planner(ctx, current.obs);
      const auto t1 = clock::now();
      StepResult sr = env.step(dec.action, dec.lookat);
      const auto t2 = clock::now();
      plan_time += seconds_between(t0, t1);
      env_time += seconds_between(t1, t2);
      tracker.add_view(sr.points);

      StepRow row;
      row.step = stepno;
      row.reward = sr.reward;
      row.coverage_reward = sr.coverage_reward;
      row.penalty = sr.penalty;
      row.m_col = sr.m_col;
      row.newly_seen_faces = sr.newly_seen_faces;
      row.face_coverage = sr.face_coverage;
      row.cr = tracker.coverage();
      row.height_cap = ctx.height_cap;
      row.action = dec.action;
      row.a_prime = sr.a_prime;
      row.lookat = dec.lookat;
      row.fallback = dec.fallback;
      row.env_seconds = seconds_between(t1, t2);
      row.plan_seconds = seconds_between(t0, t1);
      rec.steps.push_back(row);
      cr_curve.push_back(row.cr);
      if (rec.first_target_step < 0 && sr.face_coverage >= params.target_mark)
        rec.first_target_step = stepno;
      rec.final_face_coverage = sr.face_coverage;
      rec.termination = sr.termination_reason;

      if (trace) {
        json t;
        t["type"] = "step";
        t["step"] = stepno;
        t["action"] = vec3_json(dec.action);
        t["lookat"] = vec3_json(dec.lookat);
        t["a_prime"] = vec3_json(sr.a_prime);
        t["raw_position"] = vec3_json(sr.raw_position);
        t["yaw"] = env.camera_pose().yaw;
        t["pitch"] = env.camera_pose().pitch;
        t["reward"] = sr.reward;
        t["coverage_reward"] = sr.coverage_reward;
        t["penalty"] = sr.penalty;
        t["m_col"] = sr.m_col ? 1 : 0;
        t["newly_seen_faces"] = sr.newly_seen_faces;
        t["face_coverage"] = sr.face_coverage;
        t["cr"] = row.cr;
        t["height_cap"] = ctx.height_cap;
        t["fallback"] = dec.fallback;
        t["points"] = sr.points.size();
        t["captured"] = sr.termination_reason != "unschedulable";
        t["terminated"] = sr.terminated;
        t["reason"] = sr.termination_reason;
        *trace << t.dump() << "\n";
        if (!dec.debug.empty()) {
          json c;
          c["type"] = "candidates";
          c["step"] = stepno;
          json arr = json::array();
          for (const CandidateScore& s : dec.debug)
            arr.push_back({s.position.x(), s.position.y(), s.position.z(),
                           static_cast<double>(s.gain)});
          c["scores"] = std::move(arr);
          *trace << c.dump() << "\n";
        }
      }

      const bool done = sr.terminated;
      current = std::move(sr);
      if (done) break;
    }
  } catch (const Error& e) {
    rec.ok = false;
    rec.error = e.what();
  }

  rec.final_cr = tracker.coverage();
  rec.recon_points = tracker.recon_count();
  if (tracker.recon_count() > 0) {
    rec.final_cd_cm = tracker.chamfer_cm();
  } else if (rec.ok) {
    rec.ok = false;
    rec.error = "empty reconstruction";
  }

  // AUC over the planner-step curve, padded to the budget on early stops.
  std::vector<double> padded = cr_curve;
  const double pad = padded.empty() ? tracker.curve().front() : padded.back();
  while (static_cast<int>(padded.size()) < params.views_budget) padded.push_back(pad);
  rec.auc = auc(padded);

  const auto n = static_cast<double>(rec.steps.size());
  rec.fps_env = env_time > 0.0 ? n / env_time : 0.0;
  rec.fps_total = env_time + plan_time > 0.0 ? n / (env_time + plan_time) : 0.0;

  if (trace) {
    json f;
    f["type"] = "final";
    f["views"] = rec.steps.size();
    f["final_face_coverage"] = rec.final_face_coverage;
    f["final_cr"] = rec.final_cr;
    f["final_cd_cm"] = rec.final_cd_cm;
    f["auc"] = rec.auc;
    f["first_target_step"] = rec.first_target_step;
    f["recon_points"] = rec.recon_points;
    f["fps_env"] = rec.fps_env;
    f["fps_total"] = rec.fps_total;
    f["termination"] = rec.termination;
    f["ok"] = rec.ok;
    f["error"] = rec.error;
    *trace << f.dump() << "\n";
  }
  return rec;
}

namespace {

void write_steps_header(std::ofstream& out) {
  out << "scene,planner,center_x,center_y,seed,step,reward,coverage_reward,penalty,m_col,"
         "newly_seen_faces,face_coverage,cr,height_cap,action_x,action_y,action_z,"
         "a_prime_x,a_prime_y,a_prime_z,lookat_x,lookat_y,lookat_z,fallback,env_seconds,"
         "plan_seconds,tau,fov_deg,g\n";
}

void write_episode_header(std::ofstream& out) {
  out << "scene,planner,center_x,center_y,seed,views,final_face_coverage,final_cr,final_cd_cm,"
         "auc,first_target_step,recon_points,fps_env,fps_total,termination,ok,error,tau,"
         "fov_deg,g,views_budget\n";
}

struct SummaryAcc {
  int episodes = 0, failed = 0;
  double face = 0, cr = 0, cd = 0, auc_sum = 0, fps = 0;

  void add(const EpisodeRecord& r) {
    if (!r.ok) {
      ++failed;
      return;
    }
    ++episodes;
    face += r.final_face_coverage;
    cr += r.final_cr;
    cd += r.final_cd_cm;
    auc_sum += r.auc;
    fps += r.fps_env;
  }
};

}  // namespace

int cmd_run(const BenchSpec& spec, std::ostream& log) {
  Manifest man;
  try {
    man = load_manifest(spec.cache_dir);
  } catch (const Error& e) {
    log << "run: " << e.what() << "\n";
    return 2;
  }
  if (spec.output_dir.empty() || spec.seeds.empty() || spec.planners.empty()) {
    log << "run: invalid configuration (need output dir, seeds, planners)\n";
    return 2;
  }
  if (spec.views_budget < 1 || spec.views_budget > spec.env.max_steps) {
    log << "run: views_budget must lie in [1, max_steps]\n";
    return 2;
  }

  std::vector<std::string> scene_names;
  for (const ManifestEntry& e : man.entries) {
    if (std::find(scene_names.begin(), scene_names.end(), e.scene) == scene_names.end())
      scene_names.push_back(e.scene);
  }
  if (!spec.scenes.empty()) {
    for (const std::string& s : spec.scenes) {
      if (std::find(scene_names.begin(), scene_names.end(), s) == scene_names.end()) {
        log << "run: scene '" << s << "' not in the manifest\n";
        return 2;
      }
    }
    scene_names = spec.scenes;
  }
  const auto same_center = [](const Vec2& a, const Vec2& b) {
    return a.x() == b.x() && a.y() == b.y();
  };
  std::vector<Vec2> centers = spec.centers;
  if (centers.empty()) {
    for (const ManifestEntry& e : man.entries) {
      const auto same = [&](const Vec2& c) { return same_center(c, e.center); };
      if (std::find_if(centers.begin(), centers.end(), same) == centers.end())
        centers.push_back(e.center);
    }
  }

  const auto find_entry = [&](const std::string& scene,
                              const Vec2& center) -> const ManifestEntry* {
    for (const ManifestEntry& e : man.entries) {
      if (e.scene == scene && same_center(e.center, center)) return &e;
    }
    return nullptr;
  };

  EnvConfig base = spec.env;
  base.g = man.g;
  base.scene = man.scene;      // placement must match the caches
  base.face_target = 1.0;      // full-budget episodes; 0.9 is reported, not enforced

  std::error_code ec;
  fs::create_directories(spec.output_dir, ec);
  if (spec.write_traces) fs::create_directories(spec.output_dir + "/traces", ec);
  std::ofstream steps_csv(spec.output_dir + "/steps.csv");
  std::ofstream episodes_csv(spec.output_dir + "/episodes.csv");
  if (!steps_csv || !episodes_csv) {
    log << "run: cannot write to '" << spec.output_dir << "'\n";
    return 2;
  }
  write_steps_header(steps_csv);
  write_episode_header(episodes_csv);

  const std::string fov_deg = format_double(base.vertical_fov * 180.0 / EIGEN_PI);
  const std::string tau_s = format_double(spec.tau);
  const std::string row_tail = tau_s + "," + fov_deg + "," + std::to_string(base.g);

  std::map<std::string, std::shared_ptr<const PreparedScene>> scene_cache;
  const auto load_scene = [&](const ManifestEntry& e) {
    const std::string key = cache_stem(e.scene, e.center);
    auto it = scene_cache.find(key);
    if (it != scene_cache.end()) return it->second;
    PreparedScene ps;
    ps.mesh = load_mesh(e.mesh_path);
    ps.gt = load_gt(e.gt_path);
    auto shared = std::make_shared<const PreparedScene>(std::move(ps));
    scene_cache.emplace(key, shared);
    return shared;
  };

  std::vector<EpisodeRecord> records;
  int failures = 0;
  const auto emit_episode_row = [&](const EpisodeRecord& r) {
    episodes_csv << r.scene << "," << sanitize_name(r.planner) << ","
                 << format_double(r.center.x()) << "," << format_double(r.center.y()) << ","
                 << r.seed << "," << r.steps.size() << ","
                 << format_double(r.final_face_coverage) << "," << format_double(r.final_cr)
                 << "," << format_double(r.final_cd_cm) << "," << format_double(r.auc) << ","
                 << r.first_target_step << "," << r.recon_points << ","
                 << format_double(r.fps_env) << "," << format_double(r.fps_total) << ","
                 << r.termination << "," << (r.ok ? 1 : 0) << "," << csv_escape(r.error) << ","
                 << row_tail << "," << spec.views_budget << "\n";
  };

  for (const std::string& scene : scene_names) {
    for (const std::string& planner_name : spec.planners) {
      BenchPlanner planner;
      try {
        planner = make_bench_planner(planner_name, spec.debug_candidates);
      } catch (const Error& e) {
        log << "run: planner '" << planner_name << "': " << e.what() << "\n";
        return 2;
      }
      for (const Vec2& center : centers) {
        const ManifestEntry* entry = find_entry(scene, center);
        if (!entry) {
          log << "run: no cache for " << scene << " @ (" << center.x() << "," << center.y()
              << ")\n";
          ++failures;
          EpisodeRecord r;
          r.scene = scene;
          r.planner = planner_name;
          r.center = center;
          r.ok = false;
          r.error = "missing cache";
          emit_episode_row(r);
          continue;
        }
        for (const std::uint64_t seed : spec.seeds) {
          EpisodeRecord rec;
          rec.scene = scene;
          rec.planner = planner_name;
          rec.center = center;
          rec.seed = seed;
          try {
            auto prepared = load_scene(*entry);
            EnvConfig cfg = base;
            cfg.scene.object_center = center;
            Env env(prepared, cfg);

            std::ofstream trace;
            std::ostream* trace_ptr = nullptr;
            if (spec.write_traces) {
              const std::string rel = "traces/" + cache_stem(scene, center) + "__" +
                                      sanitize_name(planner_name) + "_s" + std::to_string(seed) +
                                      ".jsonl";
              trace.open(spec.output_dir + "/" + rel);
              if (!trace) throw Error("cannot write trace " + rel);
              json meta;
              meta["type"] = "meta";
              meta["scene"] = scene;
              meta["planner"] = planner_name;
              meta["center"] = vec2_json(center);
              meta["seed"] = seed;
              meta["gt"] = entry->gt_path;
              meta["mesh"] = entry->mesh_path;
              meta["g"] = cfg.g;
              meta["views_budget"] = spec.views_budget;
              meta["tau"] = spec.tau;
              meta["image_height"] = cfg.image_height;
              meta["image_width"] = cfg.image_width;
              meta["vertical_fov"] = cfg.vertical_fov;
              meta["max_range"] = cfg.max_range;
              meta["face_target"] = cfg.face_target;
              meta["max_steps"] = cfg.max_steps;
              meta["coverage_scale"] = cfg.coverage_scale;
              meta["penalty"] = cfg.penalty;
              meta["floor_clearance"] = cfg.floor_clearance;
              meta["scene_size"] = cfg.scene.scene_size;
              meta["target_extent"] = cfg.scene.target_extent;
              meta["ground_height"] = cfg.scene.ground_height;
              json sched = json::array();
              for (const HeightPhase& p : cfg.height_schedule)
                sched.push_back(json::array({p.from_step, p.cap}));
              meta["height_schedule"] = sched;
              trace << meta.dump() << "\n";
              trace_ptr = &trace;
            }

            EpisodeParams params;
            params.views_budget = spec.views_budget;
            params.tau = spec.tau;
            EpisodeRecord run = run_episode(env, planner, params, seed, trace_ptr);
            run.scene = scene;
            run.planner = planner_name;
            run.center = center;
            rec = std::move(run);
          } catch (const Error& e) {
            rec.ok = false;
            rec.error = e.what();
          }

          for (const StepRow& s : rec.steps) {
            steps_csv << scene << "," << sanitize_name(planner_name) << ","
                      << format_double(center.x()) << "," << format_double(center.y()) << ","
                      << seed << "," << s.step << "," << format_double(s.reward) << ","
                      << format_double(s.coverage_reward) << "," << format_double(s.penalty)
                      << "," << (s.m_col ? 1 : 0) << "," << s.newly_seen_faces << ","
                      << format_double(s.face_coverage) << "," << format_double(s.cr) << ","
                      << format_double(s.height_cap) << "," << format_double(s.action.x()) << ","
                      << format_double(s.action.y()) << "," << format_double(s.action.z()) << ","
                      << format_double(s.a_prime.x()) << "," << format_double(s.a_prime.y())
                      << "," << format_double(s.a_prime.z()) << ","
                      << format_double(s.lookat.x()) << "," << format_double(s.lookat.y()) << ","
                      << format_double(s.lookat.z()) << "," << (s.fallback ? 1 : 0) << ","
                      << format_double(s.env_seconds) << "," << format_double(s.plan_seconds)
                      << "," << row_tail << "\n";
          }
          emit_episode_row(rec);
          if (!rec.ok) {
            ++failures;
            log << "run: FAILED " << scene << "/" << planner_name << " @ ("
                << format_double(center.x()) << "," << format_double(center.y()) << ") seed "
                << seed << ": " << rec.error << "\n";
          } else {
            log << "run: " << scene << "/" << planner_name << " @ ("
                << format_double(center.x()) << "," << format_double(center.y()) << ") seed "
                << seed << ": face=" << format_double(rec.final_face_coverage)
                << " cr=" << format_double(rec.final_cr)
                << " cd_cm=" << format_double(rec.final_cd_cm)
                << " auc=" << format_double(rec.auc) << " fps=" << format_double(rec.fps_env)
                << "\n";
          }
          records.push_back(std::move(rec));
        }
      }
    }
  }

  std::ofstream summary_csv(spec.output_dir + "/summary.csv");
  summary_csv << "scene,planner,episodes,failed,mean_face_coverage,mean_cr,mean_cd_cm,mean_auc,"
                 "mean_fps_env,tau,fov_deg,g\n";
  const auto emit_summary = [&](const std::string& scene, const std::string& planner_name) {
    SummaryAcc acc;
    for (const EpisodeRecord& r : records) {
      if (r.planner != planner_name) continue;
      if (scene != "ALL" && r.scene != scene) continue;
      acc.add(r);
    }
    const double n = acc.episodes > 0 ? static_cast<double>(acc.episodes) : 1.0;
    summary_csv << scene << "," << sanitize_name(planner_name) << "," << acc.episodes << ","
                << acc.failed << "," << format_double(acc.face / n) << ","
                << format_double(acc.cr / n) << "," << format_double(acc.cd / n) << ","
                << format_double(acc.auc_sum / n) << "," << format_double(acc.fps / n) << ","
                << row_tail << "\n";
  };
  for (const std::string& scene : scene_names)
    for (const std::string& planner_name : spec.planners) emit_summary(scene, planner_name);
  for (const std::string& planner_name : spec.planners) emit_summary("ALL", planner_name);

  log << "run: " << records.size() << " episodes, " << failures << " failures\n";
  return failures == 0 ? 0 : 1;
}

int cmd_theory(const TheoryConfig& cfg, std::ostream& log) {
  if (cfg.ks.empty() || cfg.trials < 2 || cfg.output_dir.empty()) {
    log << "theory: invalid configuration\n";
    return 2;
  }
  for (const long k : cfg.ks) {
    if (k < 1) {
      log << "theory: k must be >= 1\n";
      return 2;
    }
  }
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  std::ofstream s1(cfg.output_dir + "/scenario1.csv");
  std::ofstream s2(cfg.output_dir + "/scenario2.csv");
  std::ofstream curve(cfg.output_dir + "/curve.dat");
  if (!s1 || !s2 || !curve) {
    log << "theory: cannot write to '" << cfg.output_dir << "'\n";
    return 2;
  }
  s1 << "k,closed_form,empirical_mean,empirical_std,trials,mean_rays,expected_rays\n";
  s2 << "k,trials,mean_rays,expected_rays_all_faces\n";
  curve << "# k closed_form empirical_mean empirical_std\n";
  for (const long k : cfg.ks) {
    const CoverageExperiment e1 = simulate_scenario1(k, cfg.trials, cfg.seed);
    const std::string closed = k >= 2 ? format_double(unseen_fraction_closed_form(k)) : "nan";
    s1 << k << "," << closed << "," << format_double(e1.mean_unseen()) << ","
       << format_double(e1.stddev_unseen()) << "," << cfg.trials << ","
       << format_double(e1.mean_rays()) << "," << format_double(expected_rays_all_cubes(k))
       << "\n";
    curve << k << " " << closed << " " << format_double(e1.mean_unseen()) << " "
          << format_double(e1.stddev_unseen()) << "\n";

    const CoverageExperiment e2 = simulate_scenario2(k, cfg.trials, cfg.seed);
    s2 << k << "," << cfg.trials << "," << format_double(e2.mean_rays()) << ","
       << format_double(expected_rays_all_cubes(6 * k)) << "\n";
    log << "theory: k=" << k << " closed=" << closed
        << " empirical=" << format_double(e1.mean_unseen())
        << " rays=" << format_double(e1.mean_rays()) << "\n";
  }
  return 0;
}

int cmd_serve(const ServeConfig& cfg, std::ostream& log) {
  Manifest man;
  try {
    man = load_manifest(cfg.cache_dir);
  } catch (const Error& e) {
    log << "serve: " << e.what() << "\n";
    return 2;
  }
  std::map<std::string, std::shared_ptr<const PreparedScene>> scenes;
  for (const ManifestEntry& e : man.entries) {
    if (!cfg.scenes.empty() &&
        std::find(cfg.scenes.begin(), cfg.scenes.end(), e.scene) == cfg.scenes.end())
      continue;
    try {
      PreparedScene ps;
      ps.mesh = load_mesh(e.mesh_path);
      ps.gt = load_gt(e.gt_path);
      scenes.emplace(cache_stem(e.scene, e.center),
                     std::make_shared<const PreparedScene>(std::move(ps)));
    } catch (const Error& err) {
      log << "serve: skipping " << cache_stem(e.scene, e.center) << ": " << err.what() << "\n";
    }
  }
  if (scenes.empty()) {
    log << "serve: no loadable scenes\n";
    return 2;
  }
  EnvConfig env_cfg = cfg.env;
  env_cfg.g = man.g;
  env_cfg.scene = man.scene;
  try {
    EnvServer server(std::move(scenes), env_cfg, cfg.max_envs);
    if (cfg.stdio) {
      log << "serve: ready on stdio (" << server.scene_names().size() << " scenes)\n";
      serve_stream(server, std::cin, std::cout);
      return 0;
    }
    TcpServer tcp(server);
    const int port = tcp.start(cfg.host, cfg.port);
    log << "serve: listening on " << cfg.host << ":" << port << " ("
        << server.scene_names().size() << " scenes)\n";
    for (;;) std::this_thread::sleep_for(std::chrono::seconds(3600));
  } catch (const Error& e) {
    log << "serve: " << e.what() << "\n";
    return 2;
  }
}

int cmd_export(const ExportConfig& cfg, std::ostream& log) {
  std::ifstream in(cfg.trace_path);
  if (!in) {
    log << "export: cannot open '" << cfg.trace_path << "'\n";
    return 2;
  }
  if (cfg.output_dir.empty()) {
    log << "export: missing output dir\n";
    return 2;
  }
  std::vector<json> rows;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      rows.push_back(json::parse(line));
    }
  } catch (const json::exception& e) {
    log << "export: bad trace: " << e.what() << "\n";
    return 2;
  }
  if (rows.empty() || rows.front().value("type", "") != "meta") {
    log << "export: trace must start with a meta row\n";
    return 2;
  }
  const json meta = rows.front();

  try {
    const TriangleMesh mesh = load_mesh(meta.at("mesh").get<std::string>());
    const Bvh bvh(mesh);
    Intrinsics intr;
    intr.height = meta.at("image_height").get<int>();
    intr.width = meta.at("image_width").get<int>();
    intr.vertical_fov = meta.at("vertical_fov").get<double>();
    intr.max_range = meta.at("max_range").get<double>();

    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    const std::string stem =
        cfg.output_dir + "/" + fs::path(cfg.trace_path).stem().string();

    std::vector<Vec3> cloud;
    std::ofstream curve;
    if (cfg.curve) {
      curve.open(stem + "_curve.csv");
      curve << "view,cr,face_coverage\n";
    }
    int view = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const json& row = rows[i];
      const std::string type = row.value("type", "");
      if (type != "reset" && type != "step") continue;
      if (!row.value("captured", true)) continue;  // unschedulable steps render nothing
      Pose pose;
      Vec3 position;
      const char* pos_key = type == "reset" ? "position" : "a_prime";
      if (!read_vec3_field(row, pos_key, position))
        throw Error("trace row lacks a position");
      pose.position = position;
      pose.yaw = row.at("yaw").get<double>();
      pose.pitch = row.at("pitch").get<double>();

      const RenderResult hits = render_hits(mesh, bvh, intr, pose);
      const std::vector<Vec3> points = unproject(hits.depth, intr, pose);
      const auto expected = row.value("points", points.size());
      if (points.size() != expected)
        throw Error("replayed view produced a different point count");
      cloud.insert(cloud.end(), points.begin(), points.end());

      if (cfg.curve)
        curve << view << "," << format_double(row.value("cr", 0.0)) << ","
              << format_double(row.value("face_coverage", 0.0)) << "\n";
      if (cfg.frames) {
        char tag[16];
        std::snprintf(tag, sizeof tag, "_%03d", view);
        write_pgm(stem + tag + ".pgm", shade_hits(mesh, hits, intr, pose));
        write_pfm(stem + tag + ".pfm", hits.depth);
      }
      ++view;
    }
    if (cfg.ply) {
      write_ply_points(stem + ".ply", cloud);
      log << "export: " << cloud.size() << " points -> " << stem << ".ply\n";
    }
    log << "export: " << view << " views\n";
    return 0;
  } catch (const Error& e) {
    log << "export: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    log << "export: bad trace: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace nbv
