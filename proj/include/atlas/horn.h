#pragma once

#include <span>

#include "atlas/pose.h"

namespace atlas {

struct HornResult {
  Pose6 T_B_A;  // maps A-points into B: b_i ~= T_B_A * a_i
  double rms = 0.0;
  bool degenerate = false;
};

// Closed-form least-squares rigid alignment (no scale) minimizing
// sum |T * a_i - b_i|^2. Degenerate (collinear or < 3 points) inputs are
// flagged instead of solved.
HornResult hornAlign(std::span<const Eigen::Vector3d> points_a,
                     std::span<const Eigen::Vector3d> points_b);

// First-order covariance of the alignment under isotropic point noise with
// standard deviation sigma_p on both point sets. Tangent ordering matches
// se3: [rotation; translation].
Matrix6d hornAlignCovariance(std::span<const Eigen::Vector3d> points_a, const Pose6& T_B_A,
                             double sigma_p);

}  // namespace atlas
