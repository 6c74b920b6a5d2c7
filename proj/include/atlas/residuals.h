#pragma once

#include <string>
#include <vector>

#include "atlas/map.h"

namespace atlas {

enum class ResidualKind : std::uint8_t {
  RelPose = 0,
  ImuPreint,
  Reprojection,
  Landmark3D,
  Absolute,
  SwitchPrior,
  BiasWalk,
};

const char* residualKindName(ResidualKind kind);
int residualDimension(ResidualKind kind);

// Optimized state values. Poses and baseframes update left-multiplicatively
// (T <- exp(delta) * T), vectors additively, switches additively with a
// clamp to [0,1]. Entries with offset -1 are held constant.
struct ProblemState {
  std::vector<Pose6> poses;
  std::vector<Eigen::Vector3d> velocities;
  std::vector<Eigen::Vector3d> gyro_biases;
  std::vector<Eigen::Vector3d> accel_biases;
  std::vector<Pose6> baseframes;
  std::vector<Eigen::Vector3d> points;
  std::vector<double> switches;

  std::vector<int> pose_offset;
  std::vector<int> velocity_offset;
  std::vector<int> gyro_bias_offset;
  std::vector<int> accel_bias_offset;
  std::vector<int> baseframe_offset;
  std::vector<int> point_offset;
  std::vector<int> switch_offset;

  int dimension = 0;

  void applyStep(const Eigen::VectorXd& dx);
};

// One residual term. Indices refer to the ProblemState arrays; -1 means the
// slot is not involved.
struct ResidualBlock {
  ResidualKind kind = ResidualKind::RelPose;

  int pose_a = -1, pose_b = -1;
  int vel_a = -1, vel_b = -1;
  int bias_g_a = -1, bias_g_b = -1;
  int bias_a_a = -1, bias_a_b = -1;
  int baseframe_a = -1, baseframe_b = -1;
  int point = -1;
  int switch_index = -1;

  // RelPose / Absolute
  Pose6 T_meas;
  Matrix6d sqrt_info6 = Matrix6d::Identity();

  // ImuPreint
  Eigen::Quaterniond delta_q = Eigen::Quaterniond::Identity();
  Eigen::Vector3d delta_v = Eigen::Vector3d::Zero();
  Eigen::Vector3d delta_p = Eigen::Vector3d::Zero();
  double delta_t = 0.0;
  Matrix9d sqrt_info9 = Matrix9d::Identity();
  double gravity = -9.81;

  // Reprojection / Landmark3D
  Pose6 T_C_I;
  double fx = 1, fy = 1, cx = 0, cy = 0;
  Eigen::Vector2d uv = Eigen::Vector2d::Zero();
  Eigen::Vector3d p_C_observed = Eigen::Vector3d::Zero();
  double inv_sigma = 1.0;
  bool robust = false;  // Huber in whitened units

  // SwitchPrior
  double inv_sigma_switch = 10.0;

  // BiasWalk
  double inv_sigma_walk_gyro = 1.0;
  double inv_sigma_walk_accel = 1.0;

  EdgeId source_edge;
};

struct JacobianEntry {
  int column = -1;  // global column offset of the state block
  int size = 0;
  Eigen::Matrix<double, 9, 6> j = Eigen::Matrix<double, 9, 6>::Zero();
};

struct BlockEval {
  bool valid = true;
  int dim = 0;
  double cost = 0.0;  // robust cost contribution 0.5 * rho(|r|^2)
  Eigen::Matrix<double, 9, 1> residual = Eigen::Matrix<double, 9, 1>::Zero();
  std::vector<JacobianEntry> jacobians;
};

// Evaluates one block at the given state; jacobians optional.
BlockEval evaluateResidualBlock(const ResidualBlock& block, const ProblemState& state,
                                bool with_jacobians, double huber_delta);

// Central finite-difference check of the analytic Jacobians on one block.
// Returns the worst relative error over all involved state columns.
double jacobianRelativeError(const ResidualBlock& block, const ProblemState& state,
                             double huber_delta = 0.0, double step = 1e-6);

}  // namespace atlas
