#include "atlas/imu_preintegration.h"

#include <stdexcept>

namespace atlas {

ImuEdge preintegrateImu(std::span<const ImuSample> samples, const Eigen::Vector3d& bias_gyro,
                        const Eigen::Vector3d& bias_accel, const ImuNoise& noise) {
  if (samples.size() < 2) throw std::invalid_argument("preintegrateImu: need >= 2 samples");
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (samples[i].t <= samples[i - 1].t) {
      throw std::invalid_argument("preintegrateImu: non-monotone timestamps");
    }
  }

  ImuEdge out;
  out.bias_gyro_ref = bias_gyro;
  out.bias_accel_ref = bias_accel;

  Eigen::Quaterniond q = Eigen::Quaterniond::Identity();
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  Eigen::Vector3d p = Eigen::Vector3d::Zero();
  Matrix9d cov = Matrix9d::Zero();

  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    const double dt = samples[i + 1].t - samples[i].t;
    const Eigen::Vector3d omega =
        0.5 * (samples[i].gyro + samples[i + 1].gyro) - bias_gyro;
    const Eigen::Quaterniond dq = so3Exp(omega * dt);
    const Eigen::Quaterniond q_next = (q * dq).normalized();
    const Eigen::Vector3d accel_mid =
        0.5 * (q * (samples[i].accel - bias_accel) + q_next * (samples[i + 1].accel - bias_accel));

    const Eigen::Matrix3d r = q.toRotationMatrix();

    // First-order propagation on (theta, v, p).
    Matrix9d f = Matrix9d::Identity();
    f.block<3, 3>(0, 0) = dq.toRotationMatrix().transpose();
    f.block<3, 3>(3, 0) = -r * skew3(samples[i].accel - bias_accel) * dt;
    f.block<3, 3>(6, 0) = -0.5 * r * skew3(samples[i].accel - bias_accel) * dt * dt;
    f.block<3, 3>(6, 3) = Eigen::Matrix3d::Identity() * dt;

    Eigen::Matrix<double, 9, 6> g = Eigen::Matrix<double, 9, 6>::Zero();
    g.block<3, 3>(0, 0) = Eigen::Matrix3d::Identity() * dt;
    g.block<3, 3>(3, 3) = r * dt;
    g.block<3, 3>(6, 3) = 0.5 * r * dt * dt;

    Eigen::Matrix<double, 6, 6> qc = Eigen::Matrix<double, 6, 6>::Zero();
    qc.topLeftCorner<3, 3>() =
        Eigen::Matrix3d::Identity() * (noise.sigma_gyro * noise.sigma_gyro / dt);
    qc.bottomRightCorner<3, 3>() =
        Eigen::Matrix3d::Identity() * (noise.sigma_accel * noise.sigma_accel / dt);

    cov = f * cov * f.transpose() + g * qc * g.transpose();

    p += v * dt + 0.5 * accel_mid * dt * dt;
    v += accel_mid * dt;
    q = q_next;
  }

  out.delta_q = q;
  out.delta_v = v;
  out.delta_p = p;
  out.delta_t = samples.back().t - samples.front().t;
  // Keep the covariance safely positive definite for whitening.
  cov += Matrix9d::Identity() * 1e-14;
  out.covariance = cov;
  return out;
}

}  // namespace atlas
