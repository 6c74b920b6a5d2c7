#pragma once

#include "atlas/map.h"

namespace atlas {

struct LandmarkQualityOptions {
  int min_observers = 2;      // Triangulated
  int min_observers_3d = 1;   // Averaged3D
  double min_angle_deg = 2.0; // ray spread gate, Triangulated only
  double min_distance_m = 0.05;
  double max_distance_m = 200.0;
  double max_reprojection_px = 5.0;
};

// Deterministic, pure quality decision for one landmark.
LandmarkQuality evaluateLandmarkQuality(const VIMap& map, const Landmark& landmark,
                                        const LandmarkQualityOptions& options = {});

// Evaluates every landmark and writes the result into the map.
void evaluateAllLandmarkQualities(VIMap& map, const LandmarkQualityOptions& options = {},
                                  bool parallel = true);

}  // namespace atlas
