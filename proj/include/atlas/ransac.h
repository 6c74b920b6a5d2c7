#pragma once

#include <optional>
#include <vector>

#include "atlas/pose.h"

namespace atlas {

struct RansacOptions {
  int max_iterations = 1000;
  double confidence = 0.99;
  std::uint64_t seed = 0;
  int min_inliers = 6;             // absolute acceptance floor
  double min_inlier_fraction = 0.3;
};

struct Correspondence2D3D {
  Eigen::Vector2d uv;
  Eigen::Vector3d point;  // in the target frame
};

struct Correspondence3D3D {
  Eigen::Vector3d p_a;
  Eigen::Vector3d p_b;
};

struct RansacResult {
  // ransacP3p: camera pose in the target frame (T_W_C).
  // ransac3d3d: transform mapping a-points into b (T_B_A).
  Pose6 transform;
  std::vector<int> inliers;  // indices into the match list, ascending
  double inlier_ratio = 0.0;
};

struct PinholeIntrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
};

// P3P within a RANSAC scheme, refined by Gauss-Newton on all inliers.
// Deterministic under a fixed seed. Returns nothing when consensus stays
// below max(min_inliers, min_inlier_fraction * N).
std::optional<RansacResult> ransacP3p(const std::vector<Correspondence2D3D>& matches,
                                      const PinholeIntrinsics& intrinsics,
                                      double inlier_px_threshold, const RansacOptions& options);

// Minimal 3-point Horn alignments within RANSAC; consensus by Euclidean
// residual, refinement by Horn on all inliers.
std::optional<RansacResult> ransac3d3d(const std::vector<Correspondence3D3D>& matches,
                                       double inlier_m_threshold, const RansacOptions& options);

// Pose-only Gauss-Newton on the pixel reprojection error over the given
// subset. Returns the refined T_W_C.
Pose6 refinePoseGn(const std::vector<Correspondence2D3D>& matches,
                   const PinholeIntrinsics& intrinsics, const Pose6& T_W_C_init,
                   const std::vector<int>& subset, int iterations = 10);

}  // namespace atlas
