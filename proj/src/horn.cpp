#include "atlas/horn.h"

#include <Eigen/Dense>

namespace atlas {

HornResult hornAlign(std::span<const Eigen::Vector3d> points_a,
                     std::span<const Eigen::Vector3d> points_b) {
  HornResult result;
  const std::size_t n = points_a.size();
  if (n < 3 || points_b.size() != n) {
    result.degenerate = true;
    return result;
  }

  Eigen::Vector3d centroid_a = Eigen::Vector3d::Zero();
  Eigen::Vector3d centroid_b = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    centroid_a += points_a[i];
    centroid_b += points_b[i];
  }
  centroid_a /= static_cast<double>(n);
  centroid_b /= static_cast<double>(n);

  // Collinear source points leave a rotation axis unobservable.
  Eigen::Matrix3d scatter = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d cross = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d da = points_a[i] - centroid_a;
    const Eigen::Vector3d db = points_b[i] - centroid_b;
    scatter += da * da.transpose();
    cross += da * db.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(scatter);
  const double scale = std::max(1.0, eig.eigenvalues().maxCoeff());
  if (eig.eigenvalues()(1) < 1e-12 * scale) {
    result.degenerate = true;
    return result;
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) {
    d(2, 2) = -1.0;
  }
  const Eigen::Matrix3d rotation = svd.matrixV() * d * svd.matrixU().transpose();

  result.T_B_A.q = Eigen::Quaterniond(rotation);
  result.T_B_A.t = centroid_b - rotation * centroid_a;
  result.T_B_A.normalize();

  double sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum_sq += (result.T_B_A * points_a[i] - points_b[i]).squaredNorm();
  }
  result.rms = std::sqrt(sum_sq / static_cast<double>(n));
  return result;
}

Matrix6d hornAlignCovariance(std::span<const Eigen::Vector3d> points_a, const Pose6& T_B_A,
                             double sigma_p) {
  // Residual r_i = exp(delta) * T * a_i - b_i, linearized at delta = 0.
  Matrix6d jtj = Matrix6d::Zero();
  for (const auto& a : points_a) {
    const Eigen::Vector3d ta = T_B_A * a;
    Eigen::Matrix<double, 3, 6> j;
    j.leftCols<3>() = -skew3(ta);
    j.rightCols<3>() = Eigen::Matrix3d::Identity();
    jtj += j.transpose() * j;
  }
  // Noise on both point sets contributes; residual variance 2 sigma^2.
  const double noise_var = 2.0 * sigma_p * sigma_p;
  return noise_var * jtj.inverse();
}

}  // namespace atlas
