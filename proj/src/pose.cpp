#include "atlas/pose.h"

#include <cmath>

namespace atlas {

namespace {
constexpr double kSmallAngle = 1e-8;
}

void Pose6::normalize() {
  q.normalize();
  // Canonical sign so equal rotations serialize to equal bytes.
  if (q.w() < 0.0 ||
      (q.w() == 0.0 && (q.x() < 0.0 || (q.x() == 0.0 && (q.y() < 0.0 || (q.y() == 0.0 && q.z() < 0.0)))))) {
    q.coeffs() = -q.coeffs();
  }
}

Pose6 Pose6::inverse() const {
  Pose6 out;
  out.q = q.conjugate();
  out.t = -(out.q * t);
  out.normalize();
  return out;
}

Pose6 Pose6::operator*(const Pose6& other) const {
  Pose6 out;
  out.q = q * other.q;
  out.t = q * other.t + t;
  out.normalize();
  return out;
}

Eigen::Matrix4d Pose6::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = q.toRotationMatrix();
  m.topRightCorner<3, 1>() = t;
  return m;
}

bool Pose6::isApprox(const Pose6& other, double tol) const {
  return rotationDistance(*this, other) <= tol && (t - other.t).norm() <= tol;
}

Pose6 poseCompose(const Pose6& a, const Pose6& b) { return a * b; }
Pose6 poseInverse(const Pose6& a) { return a.inverse(); }

Eigen::Matrix3d skew3(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Eigen::Quaterniond so3Exp(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  double half_scale;
  if (theta < kSmallAngle) {
    half_scale = 0.5 - theta * theta / 48.0;
  } else {
    half_scale = std::sin(0.5 * theta) / theta;
  }
  Eigen::Quaterniond q(std::cos(0.5 * theta), half_scale * phi.x(), half_scale * phi.y(),
                       half_scale * phi.z());
  q.normalize();
  return q;
}

Eigen::Vector3d so3Log(const Eigen::Quaterniond& q_in) {
  Eigen::Quaterniond q = q_in.normalized();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const Eigen::Vector3d v(q.x(), q.y(), q.z());
  const double n = v.norm();
  if (n < kSmallAngle) {
    // theta ~ 2n/w; phi = axis*theta with axis = v/n.
    return (2.0 / q.w()) * v;
  }
  const double theta = 2.0 * std::atan2(n, q.w());
  return (theta / n) * v;
}

Pose6 se3Exp(const Vector6d& xi) {
  const Eigen::Vector3d phi = xi.head<3>();
  const Eigen::Vector3d rho = xi.tail<3>();
  Pose6 out;
  out.q = so3Exp(phi);
  out.t = so3LeftJacobian(phi) * rho;
  out.normalize();
  return out;
}

Vector6d se3Log(const Pose6& pose) {
  Vector6d xi;
  const Eigen::Vector3d phi = so3Log(pose.q);
  xi.head<3>() = phi;
  xi.tail<3>() = so3LeftJacobianInv(phi) * pose.t;
  return xi;
}

Matrix6d se3Adjoint(const Pose6& pose) {
  Matrix6d adj = Matrix6d::Zero();
  const Eigen::Matrix3d r = pose.rotationMatrix();
  adj.topLeftCorner<3, 3>() = r;
  adj.bottomRightCorner<3, 3>() = r;
  adj.bottomLeftCorner<3, 3>() = skew3(pose.t) * r;
  return adj;
}

Eigen::Matrix3d so3LeftJacobian(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d hat = skew3(phi);
  double c1, c2;
  if (theta < kSmallAngle) {
    c1 = 0.5 - theta * theta / 24.0;
    c2 = 1.0 / 6.0 - theta * theta / 120.0;
  } else {
    c1 = (1.0 - std::cos(theta)) / (theta * theta);
    c2 = (theta - std::sin(theta)) / (theta * theta * theta);
  }
  return Eigen::Matrix3d::Identity() + c1 * hat + c2 * hat * hat;
}

Eigen::Matrix3d so3LeftJacobianInv(const Eigen::Vector3d& phi) {
  const double theta = phi.norm();
  const Eigen::Matrix3d hat = skew3(phi);
  double c;
  if (theta < kSmallAngle) {
    c = 1.0 / 12.0 + theta * theta / 720.0;
  } else {
    c = 1.0 / (theta * theta) -
        (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  }
  return Eigen::Matrix3d::Identity() - 0.5 * hat + c * hat * hat;
}

namespace {

// Translation-rotation coupling block of the SE(3) left Jacobian.
Eigen::Matrix3d se3JacobianQ(const Eigen::Vector3d& phi, const Eigen::Vector3d& rho) {
  const double theta = phi.norm();
  const Eigen::Matrix3d ph = skew3(phi);
  const Eigen::Matrix3d rh = skew3(rho);
  double c1, c2, c3;
  if (theta < 1e-4) {
    const double t2 = theta * theta;
    c1 = 1.0 / 6.0 - t2 / 120.0;
    c2 = 1.0 / 24.0 - t2 / 720.0;
    c3 = -1.0 / 120.0 + t2 / 5040.0;
  } else {
    const double t2 = theta * theta;
    const double t3 = t2 * theta;
    const double t4 = t3 * theta;
    const double t5 = t4 * theta;
    c1 = (theta - std::sin(theta)) / t3;
    c2 = (1.0 - t2 / 2.0 - std::cos(theta)) / t4;
    c3 = (theta - std::sin(theta) - t3 / 6.0) / t5;
  }
  const Eigen::Matrix3d ph_rh = ph * rh;
  const Eigen::Matrix3d rh_ph = rh * ph;
  const Eigen::Matrix3d ph_rh_ph = ph_rh * ph;
  Eigen::Matrix3d q = 0.5 * rh;
  q += c1 * (ph_rh + rh_ph + ph_rh_ph);
  q -= c2 * (ph * ph_rh + rh_ph * ph - 3.0 * ph_rh_ph);
  q -= 0.5 * (c2 - 3.0 * c3) * (ph_rh_ph * ph + ph * ph_rh_ph);
  return q;
}

}  // namespace

Matrix6d se3LeftJacobianInv(const Vector6d& xi) {
  const Eigen::Vector3d phi = xi.head<3>();
  const Eigen::Vector3d rho = xi.tail<3>();
  const Eigen::Matrix3d jinv = so3LeftJacobianInv(phi);
  const Eigen::Matrix3d q = se3JacobianQ(phi, rho);
  Matrix6d out = Matrix6d::Zero();
  out.topLeftCorner<3, 3>() = jinv;
  out.bottomRightCorner<3, 3>() = jinv;
  out.bottomLeftCorner<3, 3>() = -jinv * q * jinv;
  return out;
}

double rotationDistance(const Pose6& a, const Pose6& b) {
  return so3Log(a.q.conjugate() * b.q).norm();
}

}  // namespace atlas
