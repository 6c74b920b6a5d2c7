#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace atlas {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Vector9d = Eigen::Matrix<double, 9, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Matrix9d = Eigen::Matrix<double, 9, 9>;

// Rigid transform T_A_B: pose of frame B expressed in frame A. Transforms
// points from B into A as x_A = q * x_B + t. The quaternion is kept unit-norm
// with a canonical sign (w >= 0) so that equal transforms are bitwise equal
// after normalization.
struct Pose6 {
  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  Pose6() = default;
  Pose6(const Eigen::Quaterniond& q_in, const Eigen::Vector3d& t_in) : q(q_in), t(t_in) {
    normalize();
  }

  static Pose6 identity() { return Pose6(); }

  void normalize();

  [[nodiscard]] Pose6 inverse() const;

  // Group composition: (*this) * other = T_A_B * T_B_C.
  [[nodiscard]] Pose6 operator*(const Pose6& other) const;

  [[nodiscard]] Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
    return q * p + t;
  }

  [[nodiscard]] Eigen::Matrix3d rotationMatrix() const { return q.toRotationMatrix(); }
  [[nodiscard]] Eigen::Matrix4d matrix() const;

  [[nodiscard]] bool isApprox(const Pose6& other, double tol = 1e-9) const;
};

Pose6 poseCompose(const Pose6& a, const Pose6& b);
Pose6 poseInverse(const Pose6& a);

Eigen::Matrix3d skew3(const Eigen::Vector3d& v);

// SO(3) exponential/logarithm. log returns the rotation vector with angle in
// [0, pi].
Eigen::Quaterniond so3Exp(const Eigen::Vector3d& phi);
Eigen::Vector3d so3Log(const Eigen::Quaterniond& q);

// SE(3) exponential/logarithm with tangent ordering xi = [rotation; translation].
Pose6 se3Exp(const Vector6d& xi);
Vector6d se3Log(const Pose6& pose);

// Adjoint of T such that T * exp(xi) * T^-1 = exp(Adj(T) * xi).
Matrix6d se3Adjoint(const Pose6& pose);

Eigen::Matrix3d so3LeftJacobian(const Eigen::Vector3d& phi);
Eigen::Matrix3d so3LeftJacobianInv(const Eigen::Vector3d& phi);
inline Eigen::Matrix3d so3RightJacobian(const Eigen::Vector3d& phi) {
  return so3LeftJacobian(-phi);
}
inline Eigen::Matrix3d so3RightJacobianInv(const Eigen::Vector3d& phi) {
  return so3LeftJacobianInv(-phi);
}

// Inverse left/right Jacobians of SE(3), needed for analytic derivatives of
// log-based residuals. Closed form via the Q block (Barfoot-style), with
// series fallbacks near zero.
Matrix6d se3LeftJacobianInv(const Vector6d& xi);
inline Matrix6d se3RightJacobianInv(const Vector6d& xi) {
  return se3LeftJacobianInv(-xi);
}

// Angular distance in radians between the rotations of two poses.
double rotationDistance(const Pose6& a, const Pose6& b);

}  // namespace atlas
