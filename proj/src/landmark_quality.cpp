#include "atlas/landmark_quality.h"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "atlas/triangulation.h"

namespace atlas {

LandmarkQuality evaluateLandmarkQuality(const VIMap& map, const Landmark& landmark,
                                        const LandmarkQualityOptions& options) {
  const auto observations = resolveObservations(map, landmark);
  if (observations.empty()) return LandmarkQuality::Bad;

  std::set<VertexId> observers;
  for (const auto& ref : landmark.observations) observers.insert(ref.vertex);
  const int min_observers = landmark.kind == LandmarkKind::Averaged3D
                                ? options.min_observers_3d
                                : options.min_observers;
  if (static_cast<int>(observers.size()) < min_observers) return LandmarkQuality::Bad;

  double nearest = std::numeric_limits<double>::max();
  std::vector<Eigen::Vector3d> rays;
  rays.reserve(observations.size());
  for (const auto& o : observations) {
    const Eigen::Vector3d to_point = landmark.p_M - o.T_M_C.t;
    nearest = std::min(nearest, to_point.norm());
    if (to_point.norm() > 0.0) rays.push_back(to_point.normalized());
  }
  if (nearest < options.min_distance_m || nearest > options.max_distance_m) {
    return LandmarkQuality::Bad;
  }

  if (landmark.kind == LandmarkKind::Triangulated) {
    double max_angle = 0.0;
    for (std::size_t i = 0; i < rays.size(); ++i) {
      for (std::size_t j = i + 1; j < rays.size(); ++j) {
        const double c = std::clamp(rays[i].dot(rays[j]), -1.0, 1.0);
        max_angle = std::max(max_angle, std::acos(c));
      }
    }
    if (max_angle < options.min_angle_deg * M_PI / 180.0) return LandmarkQuality::Bad;
  }

  double reproj_sum = 0.0;
  for (const auto& o : observations) {
    const Eigen::Vector3d p_C = o.T_M_C.inverse() * landmark.p_M;
    if (p_C.z() <= 0.0) return LandmarkQuality::Bad;
    reproj_sum += (projectToPixel(p_C, o.fx, o.fy, o.cx, o.cy) - o.uv).norm();
  }
  if (reproj_sum / static_cast<double>(observations.size()) >= options.max_reprojection_px) {
    return LandmarkQuality::Bad;
  }

  return LandmarkQuality::Good;
}

void evaluateAllLandmarkQualities(VIMap& map, const LandmarkQualityOptions& options,
                                  bool parallel) {
  std::vector<LandmarkId> ids;
  ids.reserve(map.landmarks().size());
  for (const auto& [id, lm] : map.landmarks()) ids.push_back(id);
  std::vector<LandmarkQuality> results(ids.size());
  const std::int64_t n = static_cast<std::int64_t>(ids.size());
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    results[i] = evaluateLandmarkQuality(map, map.landmark(ids[i]), options);
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    map.landmark(ids[i]).quality = results[i];
  }
}

}  // namespace atlas
