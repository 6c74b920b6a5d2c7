#include "atlas/triangulation.h"

#include <omp.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace atlas {

Eigen::Vector3d bearingFromPixel(const Eigen::Vector2d& uv, double fx, double fy, double cx,
                                 double cy) {
  return {(uv.x() - cx) / fx, (uv.y() - cy) / fy, 1.0};
}

Eigen::Vector2d projectToPixel(const Eigen::Vector3d& p_C, double fx, double fy, double cx,
                               double cy) {
  return {fx * p_C.x() / p_C.z() + cx, fy * p_C.y() / p_C.z() + cy};
}

namespace {

constexpr double kMinParallaxBaseline = 1e-6;           // meters
constexpr double kMinParallaxAngleRad = 0.5 * M_PI / 180.0;

bool hasParallax(std::span<const ObservationGeometry> obs,
                 const std::vector<Eigen::Vector3d>& rays) {
  double max_baseline = 0.0;
  double max_angle = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    for (std::size_t j = i + 1; j < obs.size(); ++j) {
      max_baseline = std::max(max_baseline, (obs[i].T_M_C.t - obs[j].T_M_C.t).norm());
      const double c = std::clamp(rays[i].dot(rays[j]), -1.0, 1.0);
      max_angle = std::max(max_angle, std::acos(c));
    }
  }
  return max_baseline > kMinParallaxBaseline || max_angle > kMinParallaxAngleRad;
}

}  // namespace

TriangulationResult triangulateLandmark(std::span<const ObservationGeometry> observations) {
  TriangulationResult result;
  if (observations.size() < 2) {
    result.status = TriangulationStatus::TooFewObservations;
    return result;
  }

  std::vector<Eigen::Vector3d> rays(observations.size());
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const auto& o = observations[i];
    rays[i] = (o.T_M_C.q * bearingFromPixel(o.uv, o.fx, o.fy, o.cx, o.cy)).normalized();
  }

  if (!hasParallax(observations, rays)) {
    result.status = TriangulationStatus::InsufficientParallax;
    return result;
  }

  // Linear criterion over rays: sum_i |(I - d d^T)(X - C_i)|^2.
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const Eigen::Matrix3d P = Eigen::Matrix3d::Identity() - rays[i] * rays[i].transpose();
    A += P;
    b += P * observations[i].T_M_C.t;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(A);
  if (eig.eigenvalues().minCoeff() < 1e-10) {
    result.status = TriangulationStatus::InsufficientParallax;
    return result;
  }
  Eigen::Vector3d point = A.ldlt().solve(b);

  // Single Gauss-Newton step on the pixel reprojection error.
  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  Eigen::Vector3d g = Eigen::Vector3d::Zero();
  bool behind = false;
  for (const auto& o : observations) {
    const Pose6 T_C_M = o.T_M_C.inverse();
    const Eigen::Vector3d p_C = T_C_M * point;
    if (p_C.z() <= 0.0) {
      behind = true;
      break;
    }
    const Eigen::Vector2d r = projectToPixel(p_C, o.fx, o.fy, o.cx, o.cy) - o.uv;
    Eigen::Matrix<double, 2, 3> dpi;
    dpi << o.fx / p_C.z(), 0.0, -o.fx * p_C.x() / (p_C.z() * p_C.z()), 0.0, o.fy / p_C.z(),
        -o.fy * p_C.y() / (p_C.z() * p_C.z());
    const Eigen::Matrix<double, 2, 3> J = dpi * T_C_M.rotationMatrix();
    H += J.transpose() * J;
    g += J.transpose() * r;
  }
  if (!behind) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> heig(H);
    if (heig.eigenvalues().minCoeff() > 1e-12) {
      point -= H.ldlt().solve(g);
    }
  }

  for (const auto& o : observations) {
    const Eigen::Vector3d p_C = o.T_M_C.inverse() * point;
    if (p_C.z() <= 0.0) {
      result.status = TriangulationStatus::BehindCamera;
      return result;
    }
  }

  result.status = TriangulationStatus::Ok;
  result.position = point;
  return result;
}

TriangulationResult initializeLandmark3d(std::span<const ObservationGeometry> observations) {
  TriangulationResult result;
  std::vector<Eigen::Vector3d> points;
  for (const auto& o : observations) {
    if (o.depth <= 0.0) continue;
    const Eigen::Vector3d p_C = bearingFromPixel(o.uv, o.fx, o.fy, o.cx, o.cy) * o.depth;
    points.push_back(o.T_M_C * p_C);
  }
  if (points.empty()) {
    result.status = TriangulationStatus::NoDepth;
    return result;
  }
  std::sort(points.begin(), points.end(), [](const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    if (a.x() != b.x()) return a.x() < b.x();
    if (a.y() != b.y()) return a.y() < b.y();
    return a.z() < b.z();
  });
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  for (const auto& p : points) sum += p;
  result.status = TriangulationStatus::Ok;
  result.position = sum / static_cast<double>(points.size());
  return result;
}

std::vector<ObservationGeometry> resolveObservations(const VIMap& map, const Landmark& landmark) {
  const MissionId host_mission = map.vertex(landmark.host).mission;
  const Pose6 T_G_H = map.mission(host_mission).T_G_M;
  std::vector<KeypointRef> refs = landmark.observations;
  std::sort(refs.begin(), refs.end());

  std::vector<ObservationGeometry> out;
  out.reserve(refs.size());
  for (const KeypointRef& ref : refs) {
    const Vertex& v = map.vertex(ref.vertex);
    const Keypoint& kp = map.keypoint(ref);
    const CameraConfig& cam = map.camera(v.frames[ref.frame].camera);
    ObservationGeometry o;
    // Camera pose expressed in the host landmark's mission frame.
    if (v.mission == host_mission) {
      o.T_M_C = v.T_M_I * cam.T_I_C;
    } else {
      const Pose6 T_G_V = map.mission(v.mission).T_G_M;
      o.T_M_C = T_G_H.inverse() * T_G_V * v.T_M_I * cam.T_I_C;
    }
    o.uv = kp.uv;
    o.depth = kp.depth;
    o.fx = cam.fx;
    o.fy = cam.fy;
    o.cx = cam.cx;
    o.cy = cam.cy;
    out.push_back(o);
  }
  return out;
}

TriangulationResult retriangulateLandmark(const VIMap& map, const Landmark& landmark) {
  const auto obs = resolveObservations(map, landmark);
  if (landmark.kind == LandmarkKind::Averaged3D) {
    return initializeLandmark3d(obs);
  }
  return triangulateLandmark(obs);
}

RetriangulateReport retriangulateAll(VIMap& map, const LandmarkQualityOptions& quality,
                                     bool parallel) {
  std::vector<LandmarkId> ids;
  ids.reserve(map.landmarks().size());
  for (const auto& [id, lm] : map.landmarks()) ids.push_back(id);

  std::vector<TriangulationResult> results(ids.size());
  const std::int64_t n = static_cast<std::int64_t>(ids.size());
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    results[i] = retriangulateLandmark(map, map.landmark(ids[i]));
  }

  RetriangulateReport report;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Landmark& lm = map.landmark(ids[i]);
    if (results[i].ok()) {
      lm.p_M = results[i].position;
      lm.quality = evaluateLandmarkQuality(map, lm, quality);
      ++report.updated;
    } else {
      lm.quality = LandmarkQuality::Bad;
      ++report.failed;
    }
  }
  return report;
}

}  // namespace atlas
