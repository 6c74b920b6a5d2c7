#pragma once

#include <span>

#include "atlas/map.h"

namespace atlas {

struct ImuNoise {
  double sigma_gyro = 1e-3;   // rad/s/sqrt(Hz)
  double sigma_accel = 1e-2;  // m/s^2/sqrt(Hz)
};

// Midpoint integration of bias-corrected rates between two vertices. Gravity
// is not part of the deltas; the residual applies it. The 9x9 covariance on
// (rotation, velocity, position) is propagated to first order from the
// per-sample noise densities.
ImuEdge preintegrateImu(std::span<const ImuSample> samples, const Eigen::Vector3d& bias_gyro,
                        const Eigen::Vector3d& bias_accel, const ImuNoise& noise = {});

}  // namespace atlas
