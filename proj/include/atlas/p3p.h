#pragma once

#include <vector>

#include "atlas/pose.h"

namespace atlas {

// Minimal absolute-pose problem: recovers candidate camera poses T_W_C from
// three 2D-3D correspondences given as unit bearing vectors in the camera
// frame and world points. Up to four algebraic solutions; the caller
// disambiguates with additional points.
std::vector<Pose6> solveP3p(const Eigen::Vector3d bearings[3], const Eigen::Vector3d points[3]);

}  // namespace atlas
