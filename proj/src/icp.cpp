#include "atlas/icp.h"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "atlas/horn.h"

namespace atlas {

IcpOptions IcpOptions::fromConfig(const Config& config) {
  IcpOptions o;
  o.max_iterations = config.getInt("icp.max_iterations", o.max_iterations);
  o.max_correspondence_distance =
      config.getDouble("icp.max_correspondence_distance", o.max_correspondence_distance);
  o.min_rms_change = config.getDouble("icp.min_rms_change", o.min_rms_change);
  return o;
}

namespace {

// Exact 3D nearest-neighbor tree (median split, branch and bound).
class KdTree3 {
 public:
  explicit KdTree3(const PointCloud& points) : points_(points), perm_(points.size()) {
    std::iota(perm_.begin(), perm_.end(), 0);
    if (!points_.empty()) build(0, static_cast<int>(points_.size()));
  }

  // Index of the nearest point within max_dist, or -1.
  [[nodiscard]] int nearest(const Eigen::Vector3d& query, double max_dist) const {
    if (points_.empty()) return -1;
    int best = -1;
    double best_sq = max_dist * max_dist;
    search(0, query, &best, &best_sq);
    return best;
  }

 private:
  struct Node {
    int split_dim = -1;
    double split_value = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;
  };
  static constexpr int kLeaf = 16;

  int build(int begin, int end) {
    const int index = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    nodes_[index].begin = begin;
    nodes_[index].end = end;
    if (end - begin <= kLeaf) return index;

    Eigen::Vector3d lo = points_[perm_[begin]], hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(points_[perm_[i]]);
      hi = hi.cwiseMax(points_[perm_[i]]);
    }
    int dim = 0;
    (hi - lo).maxCoeff(&dim);
    if (hi[dim] - lo[dim] <= 0.0) return index;

    const int mid = begin + (end - begin) / 2;
    std::nth_element(perm_.begin() + begin, perm_.begin() + mid, perm_.begin() + end,
                     [&](int a, int b) {
                       if (points_[a][dim] != points_[b][dim]) {
                         return points_[a][dim] < points_[b][dim];
                       }
                       return a < b;
                     });
    nodes_[index].split_dim = dim;
    nodes_[index].split_value = points_[perm_[mid]][dim];
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[index].left = left;
    nodes_[index].right = right;
    return index;
  }

  void search(int node_index, const Eigen::Vector3d& q, int* best, double* best_sq) const {
    const Node& node = nodes_[node_index];
    if (node.split_dim < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int p = perm_[i];
        const double d = (points_[p] - q).squaredNorm();
        if (d < *best_sq || (d == *best_sq && (*best < 0 || p < *best))) {
          *best_sq = d;
          *best = p;
        }
      }
      return;
    }
    const double delta = q[node.split_dim] - node.split_value;
    const int near = delta <= 0.0 ? node.left : node.right;
    const int far = delta <= 0.0 ? node.right : node.left;
    search(near, q, best, best_sq);
    if (delta * delta <= *best_sq) search(far, q, best, best_sq);
  }

  const PointCloud& points_;
  std::vector<int> perm_;
  std::vector<Node> nodes_;
};

}  // namespace

IcpResult icpPointToPoint(const PointCloud& source, const PointCloud& target, const Pose6& T_init,
                          const IcpOptions& options) {
  IcpResult result;
  if (source.size() < 10 || target.size() < 10) {
    result.status = IcpStatus::TooFewPoints;
    return result;
  }

  const KdTree3 tree(target);
  Pose6 T = T_init;
  double prev_rms = std::numeric_limits<double>::max();

  std::vector<int> correspondence(source.size());
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const std::int64_t n = static_cast<std::int64_t>(source.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      correspondence[i] =
          tree.nearest(T * source[i], options.max_correspondence_distance);
    }

    std::vector<Eigen::Vector3d> a, b;
    a.reserve(source.size());
    b.reserve(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (correspondence[i] < 0) continue;
      a.push_back(source[i]);
      b.push_back(target[correspondence[i]]);
    }
    if (a.size() < 3) {
      result.status = iter == 0 ? IcpStatus::NoCorrespondences : IcpStatus::Degenerate;
      return result;
    }

    const HornResult align = hornAlign(a, b);
    if (align.degenerate) {
      result.status = IcpStatus::Degenerate;
      return result;
    }
    T = align.T_B_A;
    result.rms = align.rms;
    result.rms_history.push_back(align.rms);
    result.iterations = iter + 1;

    if (std::abs(prev_rms - align.rms) < options.min_rms_change) {
      result.converged = true;
      break;
    }
    prev_rms = align.rms;
  }

  result.T_target_source = T;
  return result;
}

}  // namespace atlas
