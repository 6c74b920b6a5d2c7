#pragma once

#include <span>
#include <vector>

#include "atlas/landmark_quality.h"
#include "atlas/map.h"

namespace atlas {

enum class TriangulationStatus : std::uint8_t {
  Ok = 0,
  TooFewObservations,
  InsufficientParallax,
  BehindCamera,
  NoDepth,
};

struct TriangulationResult {
  TriangulationStatus status = TriangulationStatus::TooFewObservations;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();

  [[nodiscard]] bool ok() const { return status == TriangulationStatus::Ok; }
};

// One observation with its camera pose resolved into the mission frame.
struct ObservationGeometry {
  Pose6 T_M_C;  // camera pose in mission frame
  Eigen::Vector2d uv = Eigen::Vector2d::Zero();
  double depth = -1.0;
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
};

// Unit-depth bearing (x, y, 1) of a pixel in the camera frame.
Eigen::Vector3d bearingFromPixel(const Eigen::Vector2d& uv, double fx, double fy, double cx,
                                 double cy);

Eigen::Vector2d projectToPixel(const Eigen::Vector3d& p_C, double fx, double fy, double cx,
                               double cy);

// Linear multi-view triangulation over projection rays followed by one
// Gauss-Newton refinement step on the pixel reprojection error.
TriangulationResult triangulateLandmark(std::span<const ObservationGeometry> observations);

// Mean of depth-bearing back-projections, summed in a sorted order so the
// result is independent of observation order.
TriangulationResult initializeLandmark3d(std::span<const ObservationGeometry> observations);

// Resolves a landmark's observations against the map. Cross-mission
// observations are brought into the host's mission frame via baseframes.
std::vector<ObservationGeometry> resolveObservations(const VIMap& map, const Landmark& landmark);

// Re-runs the kind-appropriate initializer for one landmark and returns the
// result without mutating the map.
TriangulationResult retriangulateLandmark(const VIMap& map, const Landmark& landmark);

struct RetriangulateReport {
  int updated = 0;
  int failed = 0;  // downgraded to Bad
};

// Applies the per-kind initializers to every landmark and re-evaluates
// quality. Parallel over landmarks; identical output to the serial path.
RetriangulateReport retriangulateAll(VIMap& map, const LandmarkQualityOptions& quality = {},
                                     bool parallel = true);

}  // namespace atlas
