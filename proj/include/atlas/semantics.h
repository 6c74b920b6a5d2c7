#pragma once

#include <optional>
#include <string>
#include <vector>

#include "atlas/loop_closure.h"
#include "atlas/map.h"

namespace atlas {

// Feature type id reserved for semantic object descriptors.
constexpr int kSemanticFeatureType = 900;

struct SemanticObservation {
  std::int64_t track_id = -1;
  VertexId vertex;
  CameraId camera;
  int class_label = 0;
  Eigen::Vector3d p_C = Eigen::Vector3d::Zero();  // object center in camera frame
  std::vector<float> descriptor;
};

// CSV rows: track_id,vertex_id,camera_id,class,x,y,z,descriptor_hex
std::vector<SemanticObservation> parseSemanticCsv(const std::string& csv_text);

// One Averaged3D landmark per track: class label attached, descriptor =
// normalized element-wise mean, position the mean back-projection. Mixing
// classes within a track is an error.
std::vector<LandmarkId> ingestSemanticTracks(VIMap& map,
                                             const std::vector<SemanticObservation>& observations);

struct SemanticMatchOptions {
  double min_cosine_similarity = 0.8;
};

// Class-gated, mutual-best cosine matching of semantic landmarks between two
// missions; pairs co-observed in a single image are excluded.
std::vector<std::pair<LandmarkId, LandmarkId>> matchSemanticLandmarks(
    const VIMap& map, const MissionId& query_mission, const MissionId& target_mission,
    const SemanticMatchOptions& options = {});

struct SemanticLcOptions {
  SemanticMatchOptions match;
  int min_cluster = 3;
  double sigma_point = 0.05;  // isotropic landmark noise for the edge covariance
  double inlier_threshold_m = 0.3;
  RansacOptions ransac;
  LoopClosureOptions lc;  // covariance floor + commit defaults
};

// Geometric verification (3D-3D RANSAC over candidate pairs), covisibility
// clustering, Horn alignment between clusters, and constraint construction
// between the vertices nearest the two cluster centroids.
std::vector<LoopClosureResult> detectSemanticLoopClosures(const VIMap& map,
                                                          const SemanticLcOptions& options = {});

struct SemanticLcReport {
  int candidate_pairs = 0;
  int verified_pairs = 0;
  int clusters = 0;
  CommitReport commit;
};

SemanticLcReport runSemanticLoopClosure(VIMap& map, const SemanticLcOptions& options = {});

}  // namespace atlas
