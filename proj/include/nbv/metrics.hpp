#pragma once

#include <cstdint>
#include <vector>

#include "nbv/types.hpp"

namespace nbv {

// Static 3-d KD-tree over a point set; exact nearest-neighbor queries.
class KdTree3 {
 public:
  KdTree3() = default;
  explicit KdTree3(std::vector<Vec3> points);

  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }

  // Squared Euclidean distance to the nearest stored point.
  double nearest_sq(const Vec3& q) const;
  double nearest(const Vec3& q) const;

 private:
  struct Node {
    Aabb box;
    std::int32_t left = -1, right = -1;  // children; -1 for leaves
    std::int32_t first = 0, count = 0;
  };

  int build(int begin, int end);
  void query(int node, const Vec3& q, double& best_sq) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
};

// Fraction of gt points with a recon point within tau (one-sided coverage).
// Empty recon covers nothing; empty gt is an error.
double coverage_ratio(const std::vector<Vec3>& gt, const std::vector<Vec3>& recon, double tau);

// Symmetric mean of mean nearest-neighbor distances (non-squared), meters.
double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b);
double chamfer_distance_cm(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// Mean of the per-step coverage curve (caller pads to the view budget).
double auc(const std::vector<double>& curve);

// Incremental exact CR/CD bookkeeping across an episode's growing recon
// cloud: per-gt-point min distances are updated against each new view batch,
// and recon->gt nearest distances accumulate against a static gt tree.
class CoverageTracker {
 public:
  CoverageTracker(std::vector<Vec3> gt_points, double tau);

  void add_view(const std::vector<Vec3>& new_points);

  double coverage() const;      // CR against everything added so far
  double chamfer_cm() const;    // symmetric CD over all points so far; error if empty
  long recon_count() const { return recon_count_; }
  const std::vector<double>& curve() const { return curve_; }

 private:
  std::vector<Vec3> gt_points_;
  KdTree3 gt_tree_;
  double tau_;
  std::vector<double> gt_min_;  // per gt point, min distance to recon so far
  double recon_sum_ = 0.0;      // sum of recon->gt nearest distances
  long recon_count_ = 0;
  std::vector<double> curve_;
};

}  // namespace nbv
