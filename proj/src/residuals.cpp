#include "atlas/residuals.h"

#include <cmath>
#include <stdexcept>

#include "atlas/triangulation.h"

namespace atlas {

const char* residualKindName(ResidualKind kind) {
  switch (kind) {
    case ResidualKind::RelPose: return "rel_pose";
    case ResidualKind::ImuPreint: return "imu_preint";
    case ResidualKind::Reprojection: return "reprojection";
    case ResidualKind::Landmark3D: return "landmark_3d";
    case ResidualKind::Absolute: return "absolute";
    case ResidualKind::SwitchPrior: return "switch_prior";
    case ResidualKind::BiasWalk: return "bias_walk";
  }
  return "unknown";
}

int residualDimension(ResidualKind kind) {
  switch (kind) {
    case ResidualKind::RelPose: return 6;
    case ResidualKind::ImuPreint: return 9;
    case ResidualKind::Reprojection: return 2;
    case ResidualKind::Landmark3D: return 3;
    case ResidualKind::Absolute: return 6;
    case ResidualKind::SwitchPrior: return 1;
    case ResidualKind::BiasWalk: return 6;
  }
  return 0;
}

void ProblemState::applyStep(const Eigen::VectorXd& dx) {
  for (std::size_t i = 0; i < poses.size(); ++i) {
    if (pose_offset[i] >= 0) {
      poses[i] = se3Exp(dx.segment<6>(pose_offset[i])) * poses[i];
    }
  }
  for (std::size_t i = 0; i < velocities.size(); ++i) {
    if (velocity_offset[i] >= 0) velocities[i] += dx.segment<3>(velocity_offset[i]);
  }
  for (std::size_t i = 0; i < gyro_biases.size(); ++i) {
    if (gyro_bias_offset[i] >= 0) gyro_biases[i] += dx.segment<3>(gyro_bias_offset[i]);
  }
  for (std::size_t i = 0; i < accel_biases.size(); ++i) {
    if (accel_bias_offset[i] >= 0) accel_biases[i] += dx.segment<3>(accel_bias_offset[i]);
  }
  for (std::size_t i = 0; i < baseframes.size(); ++i) {
    if (baseframe_offset[i] >= 0) {
      baseframes[i] = se3Exp(dx.segment<6>(baseframe_offset[i])) * baseframes[i];
    }
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (point_offset[i] >= 0) points[i] += dx.segment<3>(point_offset[i]);
  }
  for (std::size_t i = 0; i < switches.size(); ++i) {
    if (switch_offset[i] >= 0) {
      switches[i] = std::clamp(switches[i] + dx[switch_offset[i]], 0.0, 1.0);
    }
  }
}

namespace {

void addJacobian(BlockEval& eval, int column, int size,
                 const Eigen::Ref<const Eigen::MatrixXd>& j) {
  if (column < 0) return;
  JacobianEntry entry;
  entry.column = column;
  entry.size = size;
  entry.j.topLeftCorner(j.rows(), j.cols()) = j;
  eval.jacobians.push_back(entry);
}

// Robust reweighting on the whitened residual norm; returns the IRLS scale
// and fills the true robust cost.
double robustify(double squared_norm, bool robust, double huber_delta, double* cost) {
  if (!robust || huber_delta <= 0.0) {
    *cost = 0.5 * squared_norm;
    return 1.0;
  }
  const double e = std::sqrt(squared_norm);
  if (e <= huber_delta) {
    *cost = 0.5 * squared_norm;
    return 1.0;
  }
  *cost = huber_delta * e - 0.5 * huber_delta * huber_delta;
  return std::sqrt(huber_delta / e);
}

// Common point chain for Reprojection and Landmark3D: landmark expressed in
// the observer's camera frame, with Jacobian factors for every involved
// state. Cross-mission observations route through both baseframes.
struct PointChain {
  Eigen::Vector3d p_C;
  Eigen::Matrix3d r_CI_rPt;  // d p_C / d y premultiplier, y = point in observer mission frame
  Eigen::Vector3d y;
  bool cross_mission = false;
  Eigen::Vector3d x_global;  // B_h * p, only meaningful cross-mission
};

PointChain evaluatePointChain(const ResidualBlock& block, const ProblemState& state) {
  PointChain chain;
  const Pose6& observer = state.poses[block.pose_a];
  const Eigen::Vector3d& point = state.points[block.point];
  chain.cross_mission = block.baseframe_a >= 0 && block.baseframe_b >= 0 &&
                        block.baseframe_a != block.baseframe_b;
  if (chain.cross_mission) {
    const Pose6& host_base = state.baseframes[block.baseframe_a];
    const Pose6& observer_base = state.baseframes[block.baseframe_b];
    chain.x_global = host_base * point;
    chain.y = observer_base.inverse() * chain.x_global;
  } else {
    chain.y = point;
  }
  const Eigen::Vector3d p_I = observer.inverse() * chain.y;
  chain.p_C = block.T_C_I * p_I;
  chain.r_CI_rPt =
      block.T_C_I.rotationMatrix() * observer.rotationMatrix().transpose();
  return chain;
}

// d p_C / d(state blocks); fills eval with premultiplied jacobians.
void pointChainJacobians(const ResidualBlock& block, const ProblemState& state,
                         const PointChain& chain, const Eigen::Ref<const Eigen::MatrixXd>& front,
                         BlockEval& eval) {
  const Pose6& observer = state.poses[block.pose_a];
  // Observer pose: p_I = (exp(d) P)^-1 y -> R_P^T [skew(y) | -I].
  Eigen::Matrix<double, 3, 6> d_pose;
  d_pose.leftCols<3>() = skew3(chain.y);
  d_pose.rightCols<3>() = -Eigen::Matrix3d::Identity();
  addJacobian(eval, state.pose_offset[block.pose_a], 6,
              front * block.T_C_I.rotationMatrix() *
                  observer.rotationMatrix().transpose() * d_pose);

  if (!chain.cross_mission) {
    addJacobian(eval, state.point_offset[block.point], 3, front * chain.r_CI_rPt);
    return;
  }

  const Pose6& host_base = state.baseframes[block.baseframe_a];
  const Pose6& observer_base = state.baseframes[block.baseframe_b];
  const Eigen::Matrix3d r_Bm_t = observer_base.rotationMatrix().transpose();

  addJacobian(eval, state.point_offset[block.point], 3,
              front * chain.r_CI_rPt * r_Bm_t * host_base.rotationMatrix());

  // Host baseframe: y = Bm^-1 exp(d) Bh p -> R_Bm^T [-skew(Bh p) | I].
  Eigen::Matrix<double, 3, 6> d_host;
  d_host.leftCols<3>() = -skew3(chain.x_global);
  d_host.rightCols<3>() = Eigen::Matrix3d::Identity();
  addJacobian(eval, state.baseframe_offset[block.baseframe_a], 6,
              front * chain.r_CI_rPt * r_Bm_t * d_host);

  // Observer baseframe: y = (exp(d) Bm)^-1 x -> R_Bm^T [skew(x) | -I].
  Eigen::Matrix<double, 3, 6> d_obs;
  d_obs.leftCols<3>() = skew3(chain.x_global);
  d_obs.rightCols<3>() = -Eigen::Matrix3d::Identity();
  addJacobian(eval, state.baseframe_offset[block.baseframe_b], 6,
              front * chain.r_CI_rPt * r_Bm_t * d_obs);
}

void evaluateRelPoseLike(const ResidualBlock& block, const ProblemState& state,
                         bool with_jacobians, BlockEval& eval) {
  const Pose6& pose_a = state.poses[block.pose_a];
  const Pose6& pose_b = state.poses[block.pose_b];
  const bool with_baseframes = block.baseframe_a >= 0 && block.baseframe_b >= 0 &&
                               block.baseframe_a != block.baseframe_b;
  Pose6 T_A = pose_a;
  Pose6 T_B = pose_b;
  if (with_baseframes) {
    T_A = state.baseframes[block.baseframe_a] * pose_a;
    T_B = state.baseframes[block.baseframe_b] * pose_b;
  }
  const Pose6 error_pose = block.T_meas.inverse() * T_A.inverse() * T_B;
  const Vector6d r0 = se3Log(error_pose);

  const double s = block.switch_index >= 0 ? state.switches[block.switch_index] : 1.0;
  eval.dim = 6;
  eval.residual.head<6>() = s * (block.sqrt_info6 * r0);

  if (!with_jacobians) return;
  const Matrix6d jr_inv = se3RightJacobianInv(r0);
  const Matrix6d adj_tb_inv = se3Adjoint(T_B.inverse());

  if (with_baseframes) {
    const Pose6& base_a = state.baseframes[block.baseframe_a];
    addJacobian(eval, state.pose_offset[block.pose_a], 6,
                -s * block.sqrt_info6 * jr_inv * adj_tb_inv * se3Adjoint(base_a));
    addJacobian(eval, state.pose_offset[block.pose_b], 6,
                s * block.sqrt_info6 * jr_inv * se3Adjoint(pose_b.inverse()));
    addJacobian(eval, state.baseframe_offset[block.baseframe_a], 6,
                -s * block.sqrt_info6 * jr_inv * adj_tb_inv);
    addJacobian(eval, state.baseframe_offset[block.baseframe_b], 6,
                s * block.sqrt_info6 * jr_inv * adj_tb_inv);
  } else {
    addJacobian(eval, state.pose_offset[block.pose_a], 6,
                -s * block.sqrt_info6 * jr_inv * adj_tb_inv);
    addJacobian(eval, state.pose_offset[block.pose_b], 6,
                s * block.sqrt_info6 * jr_inv * se3Adjoint(pose_b.inverse()));
  }
  if (block.switch_index >= 0) {
    addJacobian(eval, state.switch_offset[block.switch_index], 1, block.sqrt_info6 * r0);
  }
}

void evaluateImu(const ResidualBlock& block, const ProblemState& state, bool with_jacobians,
                 BlockEval& eval) {
  const Pose6& pose_a = state.poses[block.pose_a];
  const Pose6& pose_b = state.poses[block.pose_b];
  const Eigen::Vector3d& v_a = state.velocities[block.vel_a];
  const Eigen::Vector3d& v_b = state.velocities[block.vel_b];
  const Eigen::Vector3d g(0.0, 0.0, block.gravity);
  const double dt = block.delta_t;

  const Eigen::Matrix3d r_a_t = pose_a.rotationMatrix().transpose();
  const Eigen::Matrix3d r_b = pose_b.rotationMatrix();

  const Eigen::Vector3d r_rot = so3Log(block.delta_q.conjugate() * pose_a.q.conjugate() * pose_b.q);
  const Eigen::Vector3d w = v_b - v_a - g * dt;
  const Eigen::Vector3d u = pose_b.t - pose_a.t - v_a * dt - 0.5 * g * dt * dt;
  const Eigen::Vector3d r_vel = r_a_t * w - block.delta_v;
  const Eigen::Vector3d r_pos = r_a_t * u - block.delta_p;

  Vector9d r;
  r << r_rot, r_vel, r_pos;
  eval.dim = 9;
  eval.residual.head<9>() = block.sqrt_info9 * r;

  if (!with_jacobians) return;

  const Eigen::Matrix3d jr_inv = so3RightJacobianInv(r_rot);
  Eigen::Matrix<double, 9, 6> j_pose_a = Eigen::Matrix<double, 9, 6>::Zero();
  Eigen::Matrix<double, 9, 6> j_pose_b = Eigen::Matrix<double, 9, 6>::Zero();
  Eigen::Matrix<double, 9, 3> j_vel_a = Eigen::Matrix<double, 9, 3>::Zero();
  Eigen::Matrix<double, 9, 3> j_vel_b = Eigen::Matrix<double, 9, 3>::Zero();

  j_pose_a.block<3, 3>(0, 0) = -jr_inv * r_b.transpose();
  j_pose_b.block<3, 3>(0, 0) = jr_inv * r_b.transpose();

  j_pose_a.block<3, 3>(3, 0) = r_a_t * skew3(w);
  j_vel_a.block<3, 3>(3, 0) = -r_a_t;
  j_vel_b.block<3, 3>(3, 0) = r_a_t;

  j_pose_a.block<3, 3>(6, 0) = r_a_t * (skew3(u) + skew3(pose_a.t));
  j_pose_a.block<3, 3>(6, 3) = -r_a_t;
  j_pose_b.block<3, 3>(6, 0) = -r_a_t * skew3(pose_b.t);
  j_pose_b.block<3, 3>(6, 3) = r_a_t;
  j_vel_a.block<3, 3>(6, 0) = -r_a_t * dt;

  addJacobian(eval, state.pose_offset[block.pose_a], 6, block.sqrt_info9 * j_pose_a);
  addJacobian(eval, state.pose_offset[block.pose_b], 6, block.sqrt_info9 * j_pose_b);
  addJacobian(eval, state.velocity_offset[block.vel_a], 3, block.sqrt_info9 * j_vel_a);
  addJacobian(eval, state.velocity_offset[block.vel_b], 3, block.sqrt_info9 * j_vel_b);
}

}  // namespace

BlockEval evaluateResidualBlock(const ResidualBlock& block, const ProblemState& state,
                                bool with_jacobians, double huber_delta) {
  BlockEval eval;
  switch (block.kind) {
    case ResidualKind::RelPose:
      evaluateRelPoseLike(block, state, with_jacobians, eval);
      break;
    case ResidualKind::Absolute: {
      const Pose6& pose = state.poses[block.pose_a];
      Pose6 T = pose;
      const bool with_base = block.baseframe_a >= 0;
      if (with_base) T = state.baseframes[block.baseframe_a] * pose;
      const Vector6d r0 = se3Log(block.T_meas.inverse() * T);
      eval.dim = 6;
      eval.residual.head<6>() = block.sqrt_info6 * r0;
      if (with_jacobians) {
        const Matrix6d jr_inv = se3RightJacobianInv(r0);
        addJacobian(eval, state.pose_offset[block.pose_a], 6,
                    block.sqrt_info6 * jr_inv * se3Adjoint(pose.inverse()));
        if (with_base) {
          addJacobian(eval, state.baseframe_offset[block.baseframe_a], 6,
                      block.sqrt_info6 * jr_inv * se3Adjoint(T.inverse()));
        }
      }
      break;
    }
    case ResidualKind::ImuPreint:
      evaluateImu(block, state, with_jacobians, eval);
      break;
    case ResidualKind::Reprojection: {
      const PointChain chain = evaluatePointChain(block, state);
      if (chain.p_C.z() <= 0.0) {
        eval.valid = false;
        return eval;
      }
      const Eigen::Vector2d r =
          projectToPixel(chain.p_C, block.fx, block.fy, block.cx, block.cy) - block.uv;
      eval.dim = 2;
      eval.residual.head<2>() = block.inv_sigma * r;
      if (with_jacobians) {
        Eigen::Matrix<double, 2, 3> dpi;
        const double z = chain.p_C.z();
        dpi << block.fx / z, 0.0, -block.fx * chain.p_C.x() / (z * z), 0.0, block.fy / z,
            -block.fy * chain.p_C.y() / (z * z);
        pointChainJacobians(block, state, chain, block.inv_sigma * dpi, eval);
      }
      break;
    }
    case ResidualKind::Landmark3D: {
      const PointChain chain = evaluatePointChain(block, state);
      const Eigen::Vector3d r = block.p_C_observed - chain.p_C;
      eval.dim = 3;
      eval.residual.head<3>() = block.inv_sigma * r;
      if (with_jacobians) {
        const Eigen::Matrix3d front = -block.inv_sigma * Eigen::Matrix3d::Identity();
        pointChainJacobians(block, state, chain, front, eval);
      }
      break;
    }
    case ResidualKind::SwitchPrior: {
      const double s = state.switches[block.switch_index];
      eval.dim = 1;
      eval.residual(0) = (1.0 - s) * block.inv_sigma_switch;
      if (with_jacobians) {
        Eigen::Matrix<double, 1, 1> j;
        j(0, 0) = -block.inv_sigma_switch;
        addJacobian(eval, state.switch_offset[block.switch_index], 1, j);
      }
      break;
    }
    case ResidualKind::BiasWalk: {
      eval.dim = 6;
      eval.residual.head<3>() =
          (state.gyro_biases[block.bias_g_b] - state.gyro_biases[block.bias_g_a]) *
          block.inv_sigma_walk_gyro;
      eval.residual.segment<3>(3) =
          (state.accel_biases[block.bias_a_b] - state.accel_biases[block.bias_a_a]) *
          block.inv_sigma_walk_accel;
      if (with_jacobians) {
        Eigen::Matrix<double, 6, 3> jg = Eigen::Matrix<double, 6, 3>::Zero();
        jg.topRows<3>() = Eigen::Matrix3d::Identity() * block.inv_sigma_walk_gyro;
        Eigen::Matrix<double, 6, 3> ja = Eigen::Matrix<double, 6, 3>::Zero();
        ja.bottomRows<3>() = Eigen::Matrix3d::Identity() * block.inv_sigma_walk_accel;
        addJacobian(eval, state.gyro_bias_offset[block.bias_g_a], 3, -jg);
        addJacobian(eval, state.gyro_bias_offset[block.bias_g_b], 3, jg);
        addJacobian(eval, state.accel_bias_offset[block.bias_a_a], 3, -ja);
        addJacobian(eval, state.accel_bias_offset[block.bias_a_b], 3, ja);
      }
      break;
    }
  }

  const double squared = eval.residual.head(eval.dim).squaredNorm();
  const double w = robustify(squared, block.robust, huber_delta, &eval.cost);
  if (w != 1.0) {
    eval.residual.head(eval.dim) *= w;
    for (auto& entry : eval.jacobians) entry.j *= w;
  }
  return eval;
}

double jacobianRelativeError(const ResidualBlock& block, const ProblemState& state,
                             double huber_delta, double step) {
  const BlockEval base = evaluateResidualBlock(block, state, true, huber_delta);
  if (!base.valid) return 0.0;
  double worst = 0.0;
  for (const auto& entry : base.jacobians) {
    for (int c = 0; c < entry.size; ++c) {
      Eigen::VectorXd dx = Eigen::VectorXd::Zero(state.dimension);
      dx[entry.column + c] = step;
      ProblemState plus = state;
      plus.applyStep(dx);
      ProblemState minus = state;
      minus.applyStep(-dx);
      const BlockEval ep = evaluateResidualBlock(block, plus, false, huber_delta);
      const BlockEval em = evaluateResidualBlock(block, minus, false, huber_delta);
      if (!ep.valid || !em.valid) continue;
      const Eigen::VectorXd fd =
          (ep.residual.head(base.dim) - em.residual.head(base.dim)) / (2.0 * step);
      const Eigen::VectorXd analytic = entry.j.block(0, c, base.dim, 1);
      const double err = (fd - analytic).norm() / std::max(1.0, analytic.norm());
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace atlas
