#include "nbv/theory.hpp"

#include <cmath>

#include "nbv/types.hpp"
#include "nbv/util.hpp"

namespace nbv {

double CoverageExperiment::mean_unseen() const {
  if (results.empty()) throw Error("coverage experiment: no trials");
  double s = 0.0;
  for (const CoverageTrial& t : results) s += t.unseen_face_fraction;
  return s / static_cast<double>(results.size());
}

double CoverageExperiment::stddev_unseen() const {
  if (results.size() < 2) throw Error("coverage experiment: need >= 2 trials for stddev");
  const double m = mean_unseen();
  double s = 0.0;
  for (const CoverageTrial& t : results) {
    const double d = t.unseen_face_fraction - m;
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(results.size() - 1));
}

double CoverageExperiment::mean_rays() const {
  if (results.empty()) throw Error("coverage experiment: no trials");
  double s = 0.0;
  for (const CoverageTrial& t : results) s += static_cast<double>(t.rays_used);
  return s / static_cast<double>(results.size());
}

double harmonic(long k) {
  if (k < 1) throw Error("harmonic: k must be >= 1");
  double h = 0.0;
  for (long i = k; i >= 1; --i) h += 1.0 / static_cast<double>(i);  // small terms first
  return h;
}

double expected_rays_all_cubes(long k) {
  if (k < 1) throw Error("expected_rays_all_cubes: k must be >= 1");
  return static_cast<double>(k) * harmonic(k);
}

double unseen_fraction_closed_form(long k) {
  if (k < 2) throw Error("unseen_fraction_closed_form: k must be >= 2");
  return std::pow(static_cast<double>(k), -1.0 / 6.0);
}

namespace {

void check_experiment_args(long k, long trials) {
  if (k < 1) throw Error("simulate: k must be >= 1");
  if (trials < 1) throw Error("simulate: trials must be >= 1");
}

// Runs one trial; stop_on_faces selects the all-faces rule over all-cubes.
CoverageTrial run_trial(long k, bool stop_on_faces, Rng& rng, std::vector<bool>& cube_hit,
                        std::vector<bool>& face_hit) {
  const long n_faces = 6 * k;
  cube_hit.assign(static_cast<std::size_t>(k), false);
  face_hit.assign(static_cast<std::size_t>(n_faces), false);
  long cubes_left = k;
  long faces_left = n_faces;
  long rays = 0;
  while (stop_on_faces ? faces_left > 0 : cubes_left > 0) {
    const auto face = static_cast<long>(rng.uniform_int(static_cast<std::uint64_t>(n_faces)));
    ++rays;
    if (!face_hit[static_cast<std::size_t>(face)]) {
      face_hit[static_cast<std::size_t>(face)] = true;
      --faces_left;
    }
    const long cube = face / 6;
    if (!cube_hit[static_cast<std::size_t>(cube)]) {
      cube_hit[static_cast<std::size_t>(cube)] = true;
      --cubes_left;
    }
  }
  CoverageTrial out;
  out.rays_used = rays;
  out.unseen_face_fraction = static_cast<double>(faces_left) / static_cast<double>(n_faces);
  return out;
}

CoverageExperiment run_experiment(long k, long trials, std::uint64_t seed, bool stop_on_faces) {
  check_experiment_args(k, trials);
  CoverageExperiment exp;
  exp.k = k;
  exp.trials = trials;
  exp.seed = seed;
  exp.results.reserve(static_cast<std::size_t>(trials));
  std::vector<bool> cube_hit, face_hit;
  for (long t = 0; t < trials; ++t) {
    Rng rng(seed + static_cast<std::uint64_t>(t));
    exp.results.push_back(run_trial(k, stop_on_faces, rng, cube_hit, face_hit));
  }
  return exp;
}

}  // namespace

CoverageExperiment simulate_scenario1(long k, long trials, std::uint64_t seed) {
  return run_experiment(k, trials, seed, /*stop_on_faces=*/false);
}

CoverageExperiment simulate_scenario2(long k, long trials, std::uint64_t seed) {
  return run_experiment(k, trials, seed, /*stop_on_faces=*/true);
}

double scenario1_refined_expectation(long k, long trials, std::uint64_t seed) {
  check_experiment_args(k, trials);
  const double keep = 1.0 - 1.0 / (6.0 * static_cast<double>(k));
  std::vector<bool> cube_hit, face_hit;
  double acc = 0.0;
  for (long t = 0; t < trials; ++t) {
    Rng rng(seed + static_cast<std::uint64_t>(t));
    const CoverageTrial trial = run_trial(k, false, rng, cube_hit, face_hit);
    acc += std::pow(keep, static_cast<double>(trial.rays_used));
  }
  return acc / static_cast<double>(trials);
}

}  // namespace nbv
