#pragma once

#include <optional>
#include <string>
#include <vector>

#include "atlas/map.h"
#include "atlas/trajectory_io.h"

namespace atlas {

// Union of two maps with disjoint mission ids; baseframes preserved.
VIMap mergeMaps(const VIMap& map_a, const VIMap& map_b);

struct KeyframeParams {
  double min_dt_s = 0.0;
  double min_translation_m = 0.0;
  double min_rotation_rad = 0.0;
};

struct KeyframeReport {
  int removed_vertices = 0;
  int retained_for_constraints = 0;  // would have been removed but carry LC/absolute edges
};

// Removes non-keyframe vertices. Their odometry edges are composed
// (covariance via first-order adjoint transport), landmark observations from
// removed vertices are dropped, and hosted landmarks are re-homed or removed.
// Vertices referenced by loop-closure or absolute edges are always retained.
KeyframeReport keyframeMap(VIMap& map, const KeyframeParams& params);

struct SparsifyReport {
  int kept = 0;
  int removed = 0;
};

// Keeps the top keep_fraction of Good landmarks ranked by (observer count,
// angular spread, id), topping up to >= 10 landmarks per vertex where
// available. Bad landmarks are always removed.
SparsifyReport sparsifyLandmarks(VIMap& map, double keep_fraction, int min_per_vertex = 10);

struct ApeResult {
  double rmse = 0.0;
  int associated_pairs = 0;
};

// RMSE of the absolute position error after nearest-timestamp association
// (10 ms gate) and optional rigid alignment of the estimate onto the truth.
std::optional<ApeResult> evaluateApe(const Trajectory& estimate, const Trajectory& ground_truth,
                                     bool align);

}  // namespace atlas
