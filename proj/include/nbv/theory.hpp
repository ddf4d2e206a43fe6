#pragma once

#include <cstdint>
#include <vector>

namespace nbv {

// Monte-Carlo model of voxel-face coverage: each ray is a uniform draw of one
// (cube, face) pair out of k x 6 outcomes.
struct CoverageTrial {
  long rays_used = 0;
  double unseen_face_fraction = 0.0;
};

struct CoverageExperiment {
  long k = 0;
  long trials = 0;
  std::uint64_t seed = 0;
  std::vector<CoverageTrial> results;

  double mean_unseen() const;
  double stddev_unseen() const;  // sample stddev
  double mean_rays() const;
};

double harmonic(long k);

// Expected draws until every cube has been hit at least once: k * H_k.
double expected_rays_all_cubes(long k);

// Asymptotic unseen-face fraction at the all-cubes stopping time: k^(-1/6).
// Requires k >= 2.
double unseen_fraction_closed_form(long k);

// Scenario 1: draw until every cube is hit; record rays used and the fraction
// of the 6k faces never drawn. Per-trial seed = seed + trial index.
CoverageExperiment simulate_scenario1(long k, long trials, std::uint64_t seed);

// Scenario 2: draw until every face of every cube is hit; unseen fraction is
// zero by construction.
CoverageExperiment simulate_scenario2(long k, long trials, std::uint64_t seed);

// Two-stage oracle for scenario 1's mean unseen fraction: simulate stopping
// times T and average (1 - 1/(6k))^T over them.
double scenario1_refined_expectation(long k, long trials, std::uint64_t seed);

}  // namespace nbv
