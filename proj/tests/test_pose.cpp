#include <doctest.h>

#include <random>

#include "atlas/pose.h"

using namespace atlas;

namespace {

Pose6 randomPose(std::mt19937_64& rng, double rot_scale = 2.0, double t_scale = 5.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector3d phi(n(rng), n(rng), n(rng));
  if (phi.norm() > 0) phi *= rot_scale * std::uniform_real_distribution<double>(0, 1)(rng) / phi.norm();
  Pose6 p;
  p.q = so3Exp(phi);
  p.t = t_scale * Eigen::Vector3d(n(rng), n(rng), n(rng));
  p.normalize();
  return p;
}

Vector6d randomTangent(std::mt19937_64& rng, double rot_max = 2.5) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector6d xi;
  for (int i = 0; i < 6; ++i) xi[i] = n(rng);
  const double rot_norm = xi.head<3>().norm();
  if (rot_norm > rot_max) xi.head<3>() *= rot_max / rot_norm;
  return xi;
}

}  // namespace

TEST_CASE("compose identity") {
  const Pose6 I = Pose6::identity();
  const Pose6 r = I * I;
  CHECK(r.isApprox(I, 1e-15));
}

TEST_CASE("compose with inverse is identity") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    const Pose6 p = randomPose(rng);
    CHECK(poseCompose(p, poseInverse(p)).isApprox(Pose6::identity(), 1e-9));
    CHECK(poseCompose(poseInverse(p), p).isApprox(Pose6::identity(), 1e-9));
  }
}

TEST_CASE("compose matches 4x4 matrix product") {
  // Rz(90) with t=(1,0,0), then Rz(90): expect Rz(180), t=(1,0,0).
  Pose6 a;
  a.q = so3Exp(Eigen::Vector3d(0, 0, M_PI / 2));
  a.t = Eigen::Vector3d(1, 0, 0);
  Pose6 b;
  b.q = so3Exp(Eigen::Vector3d(0, 0, M_PI / 2));
  const Pose6 c = a * b;
  Pose6 expected;
  expected.q = so3Exp(Eigen::Vector3d(0, 0, M_PI));
  expected.t = Eigen::Vector3d(1, 0, 0);
  CHECK(c.isApprox(expected, 1e-12));

  // And in general against the matrix oracle.
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Pose6 p = randomPose(rng);
    const Pose6 q = randomPose(rng);
    const Eigen::Matrix4d m = p.matrix() * q.matrix();
    const Pose6 r = p * q;
    CHECK((r.matrix() - m).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("se3 exp of zero is identity") {
  CHECK(se3Exp(Vector6d::Zero()).isApprox(Pose6::identity(), 1e-15));
}

TEST_CASE("se3 exp matches Rodrigues closed form") {
  Vector6d xi = Vector6d::Zero();
  xi[2] = M_PI / 2;
  const Pose6 p = se3Exp(xi);
  CHECK(rotationDistance(p, Pose6(so3Exp(Eigen::Vector3d(0, 0, M_PI / 2)), {0, 0, 0})) < 1e-12);
  CHECK(p.t.norm() < 1e-15);

  // Translation goes through the closed-form V matrix.
  xi << 0, 0, M_PI / 2, 1, 0, 0;
  const Pose6 p2 = se3Exp(xi);
  const Eigen::Vector3d expected_t = so3LeftJacobian(Eigen::Vector3d(0, 0, M_PI / 2)) *
                                     Eigen::Vector3d(1, 0, 0);
  CHECK((p2.t - expected_t).norm() < 1e-14);
  // Independent check of the V matrix value: for a z-rotation by theta,
  // V*(1,0,0) = (sin(th)/th, (1-cos(th))/th, 0).
  const double th = M_PI / 2;
  CHECK(std::abs(expected_t.x() - std::sin(th) / th) < 1e-14);
  CHECK(std::abs(expected_t.y() - (1 - std::cos(th)) / th) < 1e-14);
}

TEST_CASE("se3 log-exp round trip") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 10000; ++i) {
    const Vector6d xi = randomTangent(rng);
    const Vector6d back = se3Log(se3Exp(xi));
    CHECK((back - xi).norm() < 1e-9 * std::max(1.0, xi.norm()));
  }
}

TEST_CASE("exp-log round trip on poses") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 10000; ++i) {
    const Pose6 p = randomPose(rng);
    CHECK(se3Exp(se3Log(p)).isApprox(p, 1e-9));
  }
}

TEST_CASE("small angle branch") {
  Vector6d xi;
  xi << 1e-12, -2e-12, 1e-13, 0.5, -0.25, 0.125;
  const Vector6d back = se3Log(se3Exp(xi));
  CHECK((back - xi).norm() < 1e-14);
}

TEST_CASE("adjoint identity T exp(xi) T^-1 = exp(Adj xi)") {
  std::mt19937_64 rng(19);
  for (int i = 0; i < 300; ++i) {
    const Pose6 t = randomPose(rng);
    const Vector6d xi = 0.1 * randomTangent(rng);
    const Pose6 lhs = t * se3Exp(xi) * t.inverse();
    const Pose6 rhs = se3Exp(se3Adjoint(t) * xi);
    CHECK(lhs.isApprox(rhs, 1e-9));
  }
}

TEST_CASE("se3 left jacobian inverse matches finite differences") {
  // d/d eps log(exp(eps*delta) * exp(xi)) at eps=0 should equal Jl^-1(xi)*delta.
  std::mt19937_64 rng(23);
  for (int i = 0; i < 300; ++i) {
    const Vector6d xi = randomTangent(rng, 2.0);
    const Matrix6d jinv = se3LeftJacobianInv(xi);
    const Pose6 base = se3Exp(xi);
    for (int d = 0; d < 6; ++d) {
      const double h = 1e-7;
      Vector6d delta = Vector6d::Zero();
      delta[d] = h;
      const Vector6d plus = se3Log(se3Exp(delta) * base);
      const Vector6d minus = se3Log(se3Exp(-delta) * base);
      const Vector6d fd = (plus - minus) / (2 * h);
      const Vector6d analytic = jinv.col(d);
      CHECK((fd - analytic).norm() < 1e-5 * std::max(1.0, analytic.norm()));
    }
  }
}

TEST_CASE("so3 jacobians are mutual inverses") {
  std::mt19937_64 rng(29);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    Eigen::Vector3d phi(n(rng), n(rng), n(rng));
    const Eigen::Matrix3d prod = so3LeftJacobian(phi) * so3LeftJacobianInv(phi);
    CHECK((prod - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-10);
  }
}
