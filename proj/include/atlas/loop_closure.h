#pragma once

#include <optional>
#include <vector>

#include "atlas/config.h"
#include "atlas/covisibility.h"
#include "atlas/map.h"
#include "atlas/ransac.h"

namespace atlas {

enum class CommitMode : std::uint8_t { Edge = 0, Merge = 1 };

struct LoopClosureOptions {
  int knn = 2;
  int min_cluster = 3;
  std::int64_t min_time_gap_ns = 5'000'000'000;  // intra-mission revisit gate
  RansacOptions ransac;
  // Predefined fixed edge covariances, rotation and translation set separately.
  double visual_sigma_translation = 0.1;
  double visual_sigma_rotation_deg = 2.0;
  double icp_sigma_translation = 0.05;
  double icp_sigma_rotation_deg = 1.0;
  double switch_prior_sigma = 0.1;
  CommitMode mode = CommitMode::Edge;

  static LoopClosureOptions fromConfig(const Config& config);
};

struct LoopClosureResult {
  VertexId vertex_a;  // representative vertex in the matched mission
  VertexId vertex_b;  // query vertex
  MissionId mission_a;
  MissionId mission_b;
  Pose6 T_A_B;
  std::vector<CandidateMatch> inlier_matches;
  double inlier_ratio = 0.0;
  double descriptor_distance_sum = 0.0;
  Matrix6d covariance = Matrix6d::Identity();
  LoopClosureMethod method = LoopClosureMethod::Visual;
  // Pairs (query keypoint's landmark, matched landmark) for merge commits.
  std::vector<std::pair<LandmarkId, LandmarkId>> merge_pairs;
};

struct CommitReport {
  int edges_added = 0;
  int duplicates_skipped = 0;
  int landmarks_merged = 0;
  int deferred_unanchored = 0;
};

// Fixed covariance for a loop-closure method, ordered [rotation; translation]
// to match the residual tangent convention.
Matrix6d loopClosureCovariance(LoopClosureMethod method, const LoopClosureOptions& options);

// Full place-recognition sweep: descriptor search over Good landmarks,
// covisibility filtering, per-(vertex, target-mission) P3P RANSAC.
std::vector<LoopClosureResult> detectLoopClosures(const VIMap& map,
                                                  const LoopClosureOptions& options);

// Inserts a loop-closure edge (switch = 1) or merges the matched landmarks.
// Duplicate edges between the same vertex pair and method are skipped.
CommitReport commitLoopClosure(VIMap& map, const LoopClosureResult& result, CommitMode mode);

// Ensures some mission is anchored: without any anchored mission the lowest
// mission id becomes the identity-baseframe reference.
void ensureAnchor(VIMap& map);

// Sets baseframes of non-anchored missions from the best verified
// cross-mission result (most inliers, then lowest descriptor distance sum).
// Returns the missions anchored by this call.
std::vector<MissionId> anchorMissionsFromResults(VIMap& map,
                                                 const std::vector<LoopClosureResult>& results);

struct LoopClosureReport {
  int candidates = 0;
  int results = 0;
  CommitReport commit;
  std::vector<MissionId> newly_anchored;
};

// detect + anchor + commit in one step. Results between two unanchored
// missions are deferred (reported, not committed).
LoopClosureReport runLoopClosure(VIMap& map, const LoopClosureOptions& options);

}  // namespace atlas
