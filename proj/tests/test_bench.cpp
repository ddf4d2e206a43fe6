#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "nbv/bench.hpp"
#include "nbv/theory.hpp"
#include "nbv/mesh.hpp"
#include "nbv/mesh_factory.hpp"
#include "nbv/metrics.hpp"
#include "nbv/scene.hpp"
#include "nbv/util.hpp"

using namespace nbv;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

EnvConfig small_cfg() {
  EnvConfig cfg;
  cfg.image_height = 64;
  cfg.image_width = 64;
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "nbv_bench_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Prep a two-center cube cache once; reused across cases.
const fs::path& prep_dir() {
  static const fs::path dir = [] {
    const fs::path d = fresh_dir("cache");
    const fs::path mesh_path = d / "cube.obj";
    save_obj(mesh_path.string(), make_box(Vec3::Zero(), Vec3::Ones()));
    PrepConfig cfg;
    cfg.mesh_paths = {mesh_path.string()};
    cfg.output_dir = (d / "prep").string();
    cfg.centers = {Vec2(0, 0), Vec2(4, 4)};
    cfg.n_surface_points = 2000;
    std::ostringstream log;
    REQUIRE(cmd_prep(cfg, log) == 0);
    return d / "prep";
  }();
  return dir;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// Trace lines minus the wall-clock fps fields of the final row.
std::vector<std::string> masked_trace(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    json row = json::parse(line);
    if (row.value("type", "") == "final") {
      row.erase("fps_env");
      row.erase("fps_total");
    }
    out.push_back(row.dump());
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// Newline-delimited JSON planner that always answers the same decision.
class PlannerStub {
 public:
  PlannerStub() {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    REQUIRE(fd_ >= 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    REQUIRE(::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0);
    REQUIRE(::listen(fd_, 1) == 0);
    socklen_t len = sizeof addr;
    REQUIRE(::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) == 0);
    port_ = ntohs(addr.sin_port);
    thread_ = std::thread([this] { serve(); });
  }

  ~PlannerStub() { join(); }

  int port() const { return port_; }

  // Close the listener and wait for the connection to drain.
  void join() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
    if (thread_.joinable()) thread_.join();
  }

  std::vector<json> requests;  // safe to read after join()

 private:
  void serve() {
    const int client = ::accept(fd_, nullptr, nullptr);
    if (client < 0) return;
    std::string buf;
    char chunk[4096];
    for (;;) {
      const ssize_t n = ::recv(client, chunk, sizeof chunk, 0);
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      std::size_t pos;
      while ((pos = buf.find('\n')) != std::string::npos) {
        requests.push_back(json::parse(buf.substr(0, pos), nullptr, false));
        buf.erase(0, pos + 1);
        const std::string reply = json{{"type", "decision"},
                                       {"action", {0.5, -0.5, 0.8}},
                                       {"lookat", {0.0, 0.0, 5.0}}}
                                      .dump() +
                                  "\n";
        std::size_t sent = 0;
        while (sent < reply.size()) {
          const ssize_t m = ::send(client, reply.data() + sent, reply.size() - sent, MSG_NOSIGNAL);
          if (m <= 0) {
            ::close(client);
            return;
          }
          sent += static_cast<std::size_t>(m);
        }
      }
    }
    ::close(client);
  }

  int fd_ = -1;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST_CASE("default_centers: the five benchmark placements") {
  const std::vector<Vec2> c = default_centers();
  REQUIRE(c.size() == 5);
  CHECK(c[0] == Vec2(0, 0));
  CHECK(c[1] == Vec2(4, 4));
  CHECK(c[2] == Vec2(4, -4));
  CHECK(c[3] == Vec2(-4, 4));
  CHECK(c[4] == Vec2(-4, -4));
}

TEST_CASE("cache_stem: shortest-round-trip center encoding") {
  CHECK(cache_stem("cube", Vec2(0, 0)) == "cube__cx0_cy0");
  CHECK(cache_stem("cube", Vec2(4, -4)) == "cube__cx4_cy-4");
  CHECK(cache_stem("s", Vec2(2.5, -0.25)) == "s__cx2.5_cy-0.25");
}

TEST_CASE("cmd_prep + load_manifest: caches round-trip through the manifest") {
  const fs::path dir = prep_dir();
  CHECK(fs::exists(dir / "manifest.json"));
  for (const char* stem : {"cube__cx0_cy0", "cube__cx4_cy4"}) {
    CHECK(fs::exists(dir / (std::string(stem) + ".nbvg")));
    CHECK(fs::exists(dir / (std::string(stem) + ".obj")));
  }

  const Manifest man = load_manifest(dir.string());
  CHECK(man.g == 20);
  CHECK(man.scene.scene_size == 20.0);
  CHECK(man.scene.target_extent == 8.0);
  CHECK(man.scene.ground_height == 1.0);
  REQUIRE(man.entries.size() == 2);
  for (const ManifestEntry& e : man.entries) {
    CHECK(e.scene == "cube");
    CHECK(e.occupied > 0);
    CHECK(e.visible_faces > 0);
    CHECK(e.points > 0);
    const GroundTruth gt = load_gt(e.gt_path);
    CHECK(gt.g == 20);
    CHECK(gt.occupied_count() == e.occupied);
    CHECK(gt.total_visible_faces == e.visible_faces);
    CHECK(static_cast<long>(gt.surface_points.size()) == e.points);
    const TriangleMesh mesh = load_mesh(e.mesh_path);
    CHECK(mesh.triangles.size() == 12);
    const Aabb box = mesh_aabb(mesh);
    const Vec3 mid = (box.lo + box.hi) / 2;
    CHECK(mid.x() == doctest::Approx(e.center.x()).epsilon(1e-12));
    CHECK(mid.y() == doctest::Approx(e.center.y()).epsilon(1e-12));
  }
  CHECK(man.entries[0].center == Vec2(0, 0));
  CHECK(man.entries[1].center == Vec2(4, 4));

  CHECK_THROWS_AS(load_manifest("/nonexistent/dir"), Error);
}

TEST_CASE("run_episode: record fields are internally consistent") {
  const Manifest man = load_manifest(prep_dir().string());
  auto scene = std::make_shared<const PreparedScene>(
      PreparedScene{load_mesh(man.entries[0].mesh_path), load_gt(man.entries[0].gt_path)});
  EnvConfig cfg = small_cfg();
  cfg.g = man.g;
  cfg.scene = man.scene;
  Env env(scene, cfg);

  EpisodeParams params;
  params.views_budget = 5;
  std::ostringstream trace;
  const EpisodeRecord rec =
      run_episode(env, make_bench_planner("greedy"), params, 3, &trace);

  CHECK(rec.ok);
  CHECK(rec.error.empty());
  REQUIRE(!rec.steps.empty());
  CHECK(static_cast<int>(rec.steps.size()) <= params.views_budget);
  CHECK(rec.final_face_coverage == rec.steps.back().face_coverage);
  CHECK(rec.final_cr == rec.steps.back().cr);
  CHECK(rec.recon_points > 0);
  CHECK(rec.fps_env > 0.0);
  CHECK(rec.fps_total > 0.0);
  CHECK(rec.fps_total <= rec.fps_env);

  double prev = 0.0;
  std::vector<double> padded;
  int first_target = -1;
  for (const StepRow& s : rec.steps) {
    CHECK(s.cr >= prev);
    CHECK(s.cr <= 1.0);
    CHECK(s.height_cap == 10.0);
    prev = s.cr;
    padded.push_back(s.cr);
    if (first_target < 0 && s.face_coverage >= params.target_mark) first_target = s.step;
  }
  while (static_cast<int>(padded.size()) < params.views_budget) padded.push_back(padded.back());
  CHECK(rec.auc == auc(padded));
  CHECK(rec.first_target_step == first_target);

  // Trace layout: reset row, one step row per view, final row.
  std::istringstream lines(trace.str());
  std::string line;
  std::vector<json> rows;
  while (std::getline(lines, line)) rows.push_back(json::parse(line));
  REQUIRE(rows.size() == rec.steps.size() + 2);
  CHECK(rows.front()["type"] == "reset");
  CHECK(rows.back()["type"] == "final");
  CHECK(rows.back()["views"] == rec.steps.size());
  CHECK(rows.back()["ok"] == true);
  for (std::size_t i = 0; i < rec.steps.size(); ++i) {
    CHECK(rows[i + 1]["type"] == "step");
    CHECK(rows[i + 1]["step"] == static_cast<int>(i) + 1);
    CHECK(rows[i + 1]["cr"] == rec.steps[i].cr);
  }

  // Same seed, fresh env: byte-identical trace.
  Env env2(scene, cfg);
  std::ostringstream trace2;
  run_episode(env2, make_bench_planner("greedy"), params, 3, &trace2);
  CHECK(masked_trace(trace.str()) == masked_trace(trace2.str()));

  Env env3(scene, cfg);
  params.views_budget = cfg.max_steps + 1;
  CHECK_THROWS_AS(run_episode(env3, make_bench_planner("greedy"), params, 3, nullptr), Error);
}

TEST_CASE("make_bench_planner: names, debug flag, and extern validation") {
  CHECK_THROWS_AS(make_bench_planner("nope"), Error);
  CHECK_THROWS_AS(make_bench_planner("extern:nohost"), Error);
  CHECK_THROWS_AS(make_bench_planner("extern::77"), Error);
  CHECK_THROWS_AS(make_bench_planner("extern:h:"), Error);
  CHECK_THROWS_AS(make_bench_planner("extern:127.0.0.1:x"), Error);
  // Valid shape but nothing listening.
  CHECK_THROWS_AS(make_bench_planner("extern:127.0.0.1:1"), Error);
  CHECK(make_bench_planner("random"));
  CHECK(make_bench_planner("frontier"));
  CHECK(make_bench_planner("greedy", true));
}

TEST_CASE("extern planner: decisions come off the wire and drive the episode") {
  const Manifest man = load_manifest(prep_dir().string());
  auto scene = std::make_shared<const PreparedScene>(
      PreparedScene{load_mesh(man.entries[0].mesh_path), load_gt(man.entries[0].gt_path)});
  EnvConfig cfg = small_cfg();
  cfg.g = man.g;
  cfg.scene = man.scene;

  PlannerStub stub;
  EpisodeRecord rec;
  {
    Env env(scene, cfg);
    const BenchPlanner planner =
        make_bench_planner("extern:127.0.0.1:" + std::to_string(stub.port()));
    EpisodeParams params;
    params.views_budget = 2;
    rec = run_episode(env, planner, params, 5, nullptr);
  }  // client closes; stub drains
  stub.join();

  CHECK(rec.ok);
  REQUIRE(rec.steps.size() == 2);
  for (const StepRow& s : rec.steps) {
    CHECK(s.action == Vec3(0.5, -0.5, 0.8));
    CHECK(s.lookat == Vec3(0, 0, 5));
  }
  REQUIRE(stub.requests.size() == 2);
  for (std::size_t i = 0; i < stub.requests.size(); ++i) {
    const json& req = stub.requests[i];
    CHECK(req["type"] == "decide");
    CHECK(req["step_index"] == static_cast<int>(i));
    CHECK(req["height_cap"] == 10.0);
    CHECK(req["obs"].contains("gray_b64"));
    CHECK(req["obs"].contains("grid_b64"));
    CHECK(req["obs"]["vector"].size() == 6);
  }
}

TEST_CASE("cmd_run: csv outputs, summary math, and deterministic reruns") {
  BenchSpec spec;
  spec.cache_dir = prep_dir().string();
  spec.planners = {"random", "greedy"};
  spec.seeds = {1};
  spec.views_budget = 4;
  spec.env = small_cfg();
  const fs::path out1 = fresh_dir("run1");
  spec.output_dir = out1.string();
  std::ostringstream log;
  REQUIRE(cmd_run(spec, log) == 0);

  const auto episodes = read_lines(out1 / "episodes.csv");
  REQUIRE(episodes.size() == 5);  // header + 2 planners x 2 centers
  const auto header = split_csv(episodes[0]);
  REQUIRE(header.size() == 21);
  CHECK(header[0] == "scene");
  CHECK(header[6] == "final_face_coverage");
  CHECK(header[16] == "error");
  CHECK(header[20] == "views_budget");
  double greedy_face_sum = 0.0, greedy_auc_sum = 0.0;
  int greedy_rows = 0;
  for (std::size_t i = 1; i < episodes.size(); ++i) {
    const auto f = split_csv(episodes[i]);
    REQUIRE(f.size() == 21);
    CHECK(f[0] == "cube");
    CHECK(f[15] == "1");  // ok
    CHECK(f[16].empty());
    CHECK(f[17] == "1");   // tau
    CHECK(f[18] == "60");  // fov degrees
    CHECK(f[19] == "20");
    CHECK(f[20] == "4");
    CHECK(std::stod(f[12]) > 0.0);  // fps_env
    if (f[1] == "greedy") {
      greedy_face_sum += std::stod(f[6]);
      greedy_auc_sum += std::stod(f[9]);
      ++greedy_rows;
    }
  }
  CHECK(greedy_rows == 2);

  const auto summary = read_lines(out1 / "summary.csv");
  REQUIRE(summary.size() == 5);  // header + cube x 2 planners + ALL x 2
  bool saw_all_greedy = false;
  for (std::size_t i = 1; i < summary.size(); ++i) {
    const auto f = split_csv(summary[i]);
    REQUIRE(f.size() == 12);
    if (f[0] == "cube" && f[1] == "greedy") {
      CHECK(f[2] == "2");
      CHECK(f[3] == "0");
      CHECK(std::stod(f[4]) == doctest::Approx(greedy_face_sum / 2).epsilon(1e-12));
      CHECK(std::stod(f[7]) == doctest::Approx(greedy_auc_sum / 2).epsilon(1e-12));
    }
    if (f[0] == "ALL" && f[1] == "greedy") {
      saw_all_greedy = true;
      CHECK(f[2] == "2");
    }
  }
  CHECK(saw_all_greedy);

  // steps.csv row count: one row per recorded step.
  const auto steps = read_lines(out1 / "steps.csv");
  REQUIRE(steps.size() >= 2);
  CHECK(split_csv(steps[0]).size() == 29);
  std::size_t views_total = 0;
  for (std::size_t i = 1; i < episodes.size(); ++i)
    views_total += std::stoul(split_csv(episodes[i])[5]);
  CHECK(steps.size() == views_total + 1);

  // Traces exist for every episode.
  for (const char* name :
       {"cube__cx0_cy0__random_s1.jsonl", "cube__cx4_cy4__greedy_s1.jsonl"})
    CHECK(fs::exists(out1 / "traces" / name));

  // Rerun: traces byte-identical, CSVs identical away from timing columns.
  BenchSpec again = spec;
  const fs::path out2 = fresh_dir("run2");
  again.output_dir = out2.string();
  std::ostringstream log2;
  REQUIRE(cmd_run(again, log2) == 0);
  for (const auto& entry : fs::directory_iterator(out1 / "traces")) {
    const fs::path other = out2 / "traces" / entry.path().filename();
    REQUIRE(fs::exists(other));
    std::ifstream ta(entry.path()), tb(other);
    std::stringstream sa, sb;
    sa << ta.rdbuf();
    sb << tb.rdbuf();
    CHECK(masked_trace(sa.str()) == masked_trace(sb.str()));
  }
  const auto mask_episode = [](std::string line) {
    auto f = split_csv(line);
    if (f.size() == 21) f[12] = f[13] = "x";
    std::string out;
    for (std::size_t i = 0; i < f.size(); ++i) out += (i ? "," : "") + f[i];
    return out;
  };
  const auto a = read_lines(out1 / "episodes.csv");
  const auto b = read_lines(out2 / "episodes.csv");
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(mask_episode(a[i]) == mask_episode(b[i]));
}

TEST_CASE("cmd_run: configuration and cache failures map to exit codes") {
  std::ostringstream log;
  BenchSpec spec;
  spec.cache_dir = "/nonexistent/cache";
  spec.output_dir = (fresh_dir("runx") / "o").string();
  spec.env = small_cfg();
  CHECK(cmd_run(spec, log) == 2);

  spec.cache_dir = prep_dir().string();
  spec.scenes = {"pyramid"};
  CHECK(cmd_run(spec, log) == 2);
  spec.scenes = {};

  spec.planners = {"wat"};
  CHECK(cmd_run(spec, log) == 2);
  spec.planners = {"random"};

  spec.views_budget = 0;
  CHECK(cmd_run(spec, log) == 2);
  spec.views_budget = 99;  // > max_steps
  CHECK(cmd_run(spec, log) == 2);
  spec.views_budget = 2;

  std::string saved_output = spec.output_dir;
  spec.output_dir.clear();
  CHECK(cmd_run(spec, log) == 2);
  spec.output_dir = saved_output;

  // A corrupt ground-truth file fails its episodes but not the whole run.
  const fs::path broken = fresh_dir("broken_cache");
  fs::copy(prep_dir(), broken, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  std::ofstream(broken / "cube__cx0_cy0.nbvg", std::ios::trunc) << "garbage";
  spec.cache_dir = broken.string();
  std::ostringstream log3;
  CHECK(cmd_run(spec, log3) == 1);
  const auto episodes = read_lines(fs::path(saved_output) / "episodes.csv");
  REQUIRE(episodes.size() == 3);
  int ok_rows = 0, bad_rows = 0;
  for (std::size_t i = 1; i < episodes.size(); ++i) {
    const auto f = split_csv(episodes[i]);
    if (f[15] == "1") {
      ++ok_rows;
      CHECK(f[16].empty());
    } else {
      ++bad_rows;
      CHECK(!f[16].empty());
    }
  }
  CHECK(ok_rows == 1);
  CHECK(bad_rows == 1);
}

TEST_CASE("cmd_export: replays a trace into cloud, curve, and frames") {
  // Produce one fresh trace to export.
  BenchSpec spec;
  spec.cache_dir = prep_dir().string();
  spec.planners = {"greedy"};
  spec.scenes = {"cube"};
  spec.centers = {Vec2(0, 0)};
  spec.seeds = {1};
  spec.views_budget = 3;
  spec.env = small_cfg();
  const fs::path run_dir = fresh_dir("run_export");
  spec.output_dir = run_dir.string();
  std::ostringstream log;
  REQUIRE(cmd_run(spec, log) == 0);
  const fs::path trace = run_dir / "traces" / "cube__cx0_cy0__greedy_s1.jsonl";
  REQUIRE(fs::exists(trace));

  long expected_points = 0;
  int expected_views = 0;
  for (const std::string& line : read_lines(trace)) {
    const json row = json::parse(line);
    const std::string type = row.value("type", "");
    if (type != "reset" && type != "step") continue;
    if (!row.value("captured", true)) continue;
    expected_points += row["points"].get<long>();
    ++expected_views;
  }

  ExportConfig ecfg;
  ecfg.trace_path = trace.string();
  const fs::path out = fresh_dir("export_out");
  ecfg.output_dir = out.string();
  ecfg.frames = true;
  std::ostringstream elog;
  REQUIRE(cmd_export(ecfg, elog) == 0);

  const fs::path stem = out / "cube__cx0_cy0__greedy_s1";
  REQUIRE(fs::exists(stem.string() + ".ply"));
  std::ifstream ply(stem.string() + ".ply");
  std::string line;
  long vertex_count = -1;
  while (std::getline(ply, line)) {
    if (line.rfind("element vertex ", 0) == 0) vertex_count = std::stol(line.substr(15));
    if (line == "end_header") break;
  }
  CHECK(vertex_count == expected_points);

  const auto curve = read_lines(stem.string() + "_curve.csv");
  REQUIRE(static_cast<int>(curve.size()) == expected_views + 1);
  CHECK(curve[0] == "view,cr,face_coverage");
  for (int v = 0; v < expected_views; ++v) {
    char tag[16];
    std::snprintf(tag, sizeof tag, "_%03d", v);
    CHECK(fs::exists(stem.string() + tag + ".pgm"));
    CHECK(fs::exists(stem.string() + tag + ".pfm"));
  }

  ExportConfig bad = ecfg;
  bad.trace_path = "/nonexistent.jsonl";
  CHECK(cmd_export(bad, elog) == 2);

  const fs::path no_meta = out / "no_meta.jsonl";
  std::ofstream(no_meta) << R"({"type":"step","step":1})" << "\n";
  bad.trace_path = no_meta.string();
  CHECK(cmd_export(bad, elog) == 2);
  bad.output_dir.clear();
  bad.trace_path = trace.string();
  CHECK(cmd_export(bad, elog) == 2);
}

TEST_CASE("cmd_theory: csv outputs match direct simulation") {
  TheoryConfig cfg;
  cfg.ks = {16, 64};
  cfg.trials = 50;
  const fs::path out = fresh_dir("theory_out");
  cfg.output_dir = out.string();
  std::ostringstream log;
  REQUIRE(cmd_theory(cfg, log) == 0);

  const auto s1 = read_lines(out / "scenario1.csv");
  REQUIRE(s1.size() == 3);
  CHECK(s1[0] == "k,closed_form,empirical_mean,empirical_std,trials,mean_rays,expected_rays");
  const auto row16 = split_csv(s1[1]);
  CHECK(row16[0] == "16");
  const CoverageExperiment e16 = simulate_scenario1(16, cfg.trials, cfg.seed);
  CHECK(row16[1] == format_double(unseen_fraction_closed_form(16)));
  CHECK(row16[2] == format_double(e16.mean_unseen()));
  CHECK(row16[5] == format_double(e16.mean_rays()));

  const auto s2 = read_lines(out / "scenario2.csv");
  REQUIRE(s2.size() == 3);
  const auto row2 = split_csv(s2[2]);
  CHECK(row2[0] == "64");
  CHECK(row2[3] == format_double(expected_rays_all_cubes(6 * 64)));

  CHECK(read_lines(out / "curve.dat").size() == 3);

  TheoryConfig bad = cfg;
  bad.trials = 1;
  CHECK(cmd_theory(bad, log) == 2);
  bad = cfg;
  bad.ks = {0};
  CHECK(cmd_theory(bad, log) == 2);
  bad = cfg;
  bad.output_dir.clear();
  CHECK(cmd_theory(bad, log) == 2);
}
