#include "atlas/ransac.h"

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "atlas/horn.h"
#include "atlas/p3p.h"
#include "atlas/triangulation.h"

namespace atlas {

namespace {

int requiredIterations(int best_inliers, int n, int sample_size, double confidence,
                       int max_iterations) {
  if (best_inliers <= 0) return max_iterations;
  const double w = static_cast<double>(best_inliers) / n;
  const double p_good = std::pow(w, sample_size);
  if (p_good >= 1.0 - 1e-12) return 1;
  const double denom = std::log(1.0 - p_good);
  if (denom >= 0.0) return max_iterations;
  const double needed = std::log(1.0 - confidence) / denom;
  if (needed >= static_cast<double>(max_iterations)) return max_iterations;
  return std::max(1, static_cast<int>(std::ceil(needed)));
}

void sampleDistinct3(std::mt19937_64& rng, int n, int out[3]) {
  std::uniform_int_distribution<int> dist(0, n - 1);
  out[0] = dist(rng);
  do {
    out[1] = dist(rng);
  } while (out[1] == out[0]);
  do {
    out[2] = dist(rng);
  } while (out[2] == out[0] || out[2] == out[1]);
}

bool acceptConsensus(std::size_t inliers, std::size_t n, const RansacOptions& options) {
  const std::size_t floor_abs = static_cast<std::size_t>(options.min_inliers);
  const std::size_t floor_frac =
      static_cast<std::size_t>(std::ceil(options.min_inlier_fraction * static_cast<double>(n)));
  return inliers >= std::max(floor_abs, floor_frac);
}

}  // namespace

Pose6 refinePoseGn(const std::vector<Correspondence2D3D>& matches,
                   const PinholeIntrinsics& intrinsics, const Pose6& T_W_C_init,
                   const std::vector<int>& subset, int iterations) {
  Pose6 T_C_W = T_W_C_init.inverse();
  double lambda = 1e-6;
  double last_cost = std::numeric_limits<double>::max();
  for (int it = 0; it < iterations; ++it) {
    Matrix6d h = Matrix6d::Zero();
    Vector6d g = Vector6d::Zero();
    double cost = 0.0;
    for (const int idx : subset) {
      const auto& m = matches[idx];
      const Eigen::Vector3d p_C = T_C_W * m.point;
      if (p_C.z() <= 0.0) continue;
      const Eigen::Vector2d r =
          projectToPixel(p_C, intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy) - m.uv;
      cost += r.squaredNorm();
      Eigen::Matrix<double, 2, 3> dpi;
      dpi << intrinsics.fx / p_C.z(), 0.0, -intrinsics.fx * p_C.x() / (p_C.z() * p_C.z()), 0.0,
          intrinsics.fy / p_C.z(), -intrinsics.fy * p_C.y() / (p_C.z() * p_C.z());
      Eigen::Matrix<double, 3, 6> dp;
      dp.leftCols<3>() = -skew3(p_C);
      dp.rightCols<3>() = Eigen::Matrix3d::Identity();
      const Eigen::Matrix<double, 2, 6> j = dpi * dp;
      h += j.transpose() * j;
      g += j.transpose() * r;
    }
    if (cost >= last_cost && it > 0) break;
    last_cost = cost;
    const Vector6d step = (h + lambda * Matrix6d::Identity()).ldlt().solve(-g);
    if (step.norm() < 1e-14) break;
    T_C_W = se3Exp(step) * T_C_W;
  }
  return T_C_W.inverse();
}

std::optional<RansacResult> ransacP3p(const std::vector<Correspondence2D3D>& matches,
                                      const PinholeIntrinsics& intrinsics,
                                      double inlier_px_threshold, const RansacOptions& options) {
  const int n = static_cast<int>(matches.size());
  if (n < 4) return std::nullopt;

  std::vector<Eigen::Vector3d> bearings(n);
  for (int i = 0; i < n; ++i) {
    bearings[i] =
        bearingFromPixel(matches[i].uv, intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy)
            .normalized();
  }

  auto countInliers = [&](const Pose6& T_W_C, std::vector<int>* out) {
    const Pose6 T_C_W = T_W_C.inverse();
    int count = 0;
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d p_C = T_C_W * matches[i].point;
      if (p_C.z() <= 0.0) continue;
      const Eigen::Vector2d err =
          projectToPixel(p_C, intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy) -
          matches[i].uv;
      if (err.norm() < inlier_px_threshold) {
        ++count;
        if (out) out->push_back(i);
      }
    }
    return count;
  };

  std::mt19937_64 rng(options.seed);
  int best_count = 0;
  Pose6 best_pose;
  int iterations_needed = options.max_iterations;
  for (int iter = 0; iter < iterations_needed; ++iter) {
    int sample[3];
    sampleDistinct3(rng, n, sample);
    const Eigen::Vector3d f[3] = {bearings[sample[0]], bearings[sample[1]], bearings[sample[2]]};
    const Eigen::Vector3d x[3] = {matches[sample[0]].point, matches[sample[1]].point,
                                  matches[sample[2]].point};
    for (const Pose6& candidate : solveP3p(f, x)) {
      const int count = countInliers(candidate, nullptr);
      if (count > best_count) {
        best_count = count;
        best_pose = candidate;
        iterations_needed = std::min(
            options.max_iterations,
            std::max(iter + 1, requiredIterations(count, n, 3, options.confidence,
                                                  options.max_iterations)));
      }
    }
  }

  if (best_count == 0) return std::nullopt;
  std::vector<int> consensus;
  countInliers(best_pose, &consensus);
  const Pose6 refined = refinePoseGn(matches, intrinsics, best_pose, consensus);
  RansacResult result;
  result.transform = refined;
  countInliers(refined, &result.inliers);
  if (result.inliers.size() < consensus.size()) {
    // Refinement should not lose consensus; keep the better classification.
    result.transform = best_pose;
    result.inliers.clear();
    countInliers(best_pose, &result.inliers);
  }
  result.inlier_ratio = static_cast<double>(result.inliers.size()) / n;
  if (!acceptConsensus(result.inliers.size(), matches.size(), options)) return std::nullopt;
  return result;
}

std::optional<RansacResult> ransac3d3d(const std::vector<Correspondence3D3D>& matches,
                                       double inlier_m_threshold, const RansacOptions& options) {
  const int n = static_cast<int>(matches.size());
  if (n < 4) return std::nullopt;

  auto countInliers = [&](const Pose6& T_B_A, std::vector<int>* out) {
    int count = 0;
    for (int i = 0; i < n; ++i) {
      if ((T_B_A * matches[i].p_a - matches[i].p_b).norm() < inlier_m_threshold) {
        ++count;
        if (out) out->push_back(i);
      }
    }
    return count;
  };

  std::mt19937_64 rng(options.seed);
  int best_count = 0;
  Pose6 best_transform;
  int iterations_needed = options.max_iterations;
  for (int iter = 0; iter < iterations_needed; ++iter) {
    int sample[3];
    sampleDistinct3(rng, n, sample);
    const Eigen::Vector3d a[3] = {matches[sample[0]].p_a, matches[sample[1]].p_a,
                                  matches[sample[2]].p_a};
    const Eigen::Vector3d b[3] = {matches[sample[0]].p_b, matches[sample[1]].p_b,
                                  matches[sample[2]].p_b};
    const HornResult align = hornAlign(std::span<const Eigen::Vector3d>(a, 3),
                                       std::span<const Eigen::Vector3d>(b, 3));
    if (align.degenerate) continue;
    const int count = countInliers(align.T_B_A, nullptr);
    if (count > best_count) {
      best_count = count;
      best_transform = align.T_B_A;
      iterations_needed =
          std::min(options.max_iterations,
                   std::max(iter + 1, requiredIterations(count, n, 3, options.confidence,
                                                         options.max_iterations)));
    }
  }

  if (best_count < 3) return std::nullopt;
  std::vector<int> consensus;
  countInliers(best_transform, &consensus);
  std::vector<Eigen::Vector3d> in_a, in_b;
  for (const int i : consensus) {
    in_a.push_back(matches[i].p_a);
    in_b.push_back(matches[i].p_b);
  }
  const HornResult refined = hornAlign(in_a, in_b);
  RansacResult result;
  result.transform = refined.degenerate ? best_transform : refined.T_B_A;
  countInliers(result.transform, &result.inliers);
  if (result.inliers.size() < consensus.size()) {
    result.transform = best_transform;
    result.inliers = consensus;
  }
  result.inlier_ratio = static_cast<double>(result.inliers.size()) / n;
  if (!acceptConsensus(result.inliers.size(), matches.size(), options)) return std::nullopt;
  return result;
}

}  // namespace atlas
