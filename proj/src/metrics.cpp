#include "nbv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace nbv {
namespace {

constexpr int kLeafSize = 16;

}  // namespace

KdTree3::KdTree3(std::vector<Vec3> points) : points_(std::move(points)) {
  for (const Vec3& p : points_) {
    if (!p.allFinite()) throw Error("kd-tree: non-finite input point");
  }
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    build(0, static_cast<int>(points_.size()));
  }
}

int KdTree3::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Aabb box;
  for (int i = begin; i < end; ++i) box.expand(points_[i]);
  nodes_[id].box = box;
  nodes_[id].first = begin;
  nodes_[id].count = end - begin;
  if (end - begin <= kLeafSize) return id;

  int axis = 0;
  box.extent().maxCoeff(&axis);
  const int mid = begin + (end - begin) / 2;
  std::nth_element(points_.begin() + begin, points_.begin() + mid, points_.begin() + end,
                   [axis](const Vec3& a, const Vec3& b) { return a[axis] < b[axis]; });
  const int l = build(begin, mid);
  const int r = build(mid, end);
  nodes_[id].left = l;
  nodes_[id].right = r;
  return id;
}

namespace {

double box_dist_sq(const Aabb& box, const Vec3& q) {
  double d2 = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double lo = box.lo[a] - q[a];
    const double hi = q[a] - box.hi[a];
    const double d = std::max({lo, hi, 0.0});
    d2 += d * d;
  }
  return d2;
}

}  // namespace

void KdTree3::query(int node, const Vec3& q, double& best_sq) const {
  const Node& n = nodes_[node];
  if (n.left < 0) {
    for (int i = n.first; i < n.first + n.count; ++i) {
      best_sq = std::min(best_sq, (points_[i] - q).squaredNorm());
    }
    return;
  }
  const double dl = box_dist_sq(nodes_[n.left].box, q);
  const double dr = box_dist_sq(nodes_[n.right].box, q);
  const int near = dl <= dr ? n.left : n.right;
  const int far = dl <= dr ? n.right : n.left;
  const double dfar = std::max(dl, dr);
  if (std::min(dl, dr) < best_sq) query(near, q, best_sq);
  if (dfar < best_sq) query(far, q, best_sq);
}

double KdTree3::nearest_sq(const Vec3& q) const {
  if (points_.empty()) throw Error("kd-tree: nearest query on empty tree");
  double best = std::numeric_limits<double>::infinity();
  query(0, q, best);
  return best;
}

double KdTree3::nearest(const Vec3& q) const { return std::sqrt(nearest_sq(q)); }

double coverage_ratio(const std::vector<Vec3>& gt, const std::vector<Vec3>& recon, double tau) {
  if (gt.empty()) throw Error("coverage_ratio: empty reference cloud");
  if (tau <= 0.0) throw Error("coverage_ratio: tau must be positive");
  if (recon.empty()) return 0.0;
  const KdTree3 tree(recon);
  const double tau_sq = tau * tau;
  long covered = 0;
  for (const Vec3& p : gt) {
    if (tree.nearest_sq(p) <= tau_sq) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(gt.size());
}

double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw Error("chamfer_distance: empty cloud");
  const KdTree3 ta(a), tb(b);
  double sum_ab = 0.0;
  for (const Vec3& p : a) sum_ab += tb.nearest(p);
  double sum_ba = 0.0;
  for (const Vec3& p : b) sum_ba += ta.nearest(p);
  return 0.5 * (sum_ab / static_cast<double>(a.size()) + sum_ba / static_cast<double>(b.size()));
}

double chamfer_distance_cm(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  return 100.0 * chamfer_distance(a, b);
}

double auc(const std::vector<double>& curve) {
  if (curve.empty()) throw Error("auc: empty curve");
  return std::accumulate(curve.begin(), curve.end(), 0.0) / static_cast<double>(curve.size());
}

CoverageTracker::CoverageTracker(std::vector<Vec3> gt_points, double tau)
    : gt_points_(std::move(gt_points)), gt_tree_(gt_points_), tau_(tau) {
  if (gt_points_.empty()) throw Error("coverage tracker: empty reference cloud");
  if (tau <= 0.0) throw Error("coverage tracker: tau must be positive");
  gt_min_.assign(gt_points_.size(), std::numeric_limits<double>::infinity());
}

void CoverageTracker::add_view(const std::vector<Vec3>& new_points) {
  if (!new_points.empty()) {
    const KdTree3 batch(new_points);
    for (std::size_t i = 0; i < gt_points_.size(); ++i) {
      const double d = batch.nearest(gt_points_[i]);
      if (d < gt_min_[i]) gt_min_[i] = d;
    }
    for (const Vec3& p : new_points) recon_sum_ += gt_tree_.nearest(p);
    recon_count_ += static_cast<long>(new_points.size());
  }
  curve_.push_back(coverage());
}

double CoverageTracker::coverage() const {
  long covered = 0;
  for (const double d : gt_min_) {
    if (d <= tau_) ++covered;
  }
  return static_cast<double>(covered) / static_cast<double>(gt_points_.size());
}

double CoverageTracker::chamfer_cm() const {
  if (recon_count_ == 0) throw Error("coverage tracker: no reconstruction points yet");
  double gt_sum = 0.0;
  for (const double d : gt_min_) gt_sum += d;
  const double mean_gt = gt_sum / static_cast<double>(gt_points_.size());
  const double mean_recon = recon_sum_ / static_cast<double>(recon_count_);
  return 100.0 * 0.5 * (mean_gt + mean_recon);
}

}  // namespace nbv
