#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "atlas/id.h"
#include "atlas/pose.h"

namespace atlas {

enum class LandmarkKind : std::uint8_t { Triangulated = 0, Averaged3D = 1 };
enum class LandmarkQuality : std::uint8_t { Unknown = 0, Good = 1, Bad = 2 };
enum class LoopClosureMethod : std::uint8_t { Visual = 0, Icp = 1, Semantic = 2 };

enum class DescriptorKind : std::uint8_t { Binary = 0, Float = 1 };

struct FeatureTypeConfig {
  int feature_type_id = 0;
  DescriptorKind descriptor_kind = DescriptorKind::Binary;
  // Bits for binary descriptors, dimensions for float descriptors.
  int descriptor_size = 256;
  // Match acceptance distance: Hamming bits (binary) or Euclidean (float).
  double match_threshold = 80.0;
  double lowe_ratio = 0.8;
  // Per-type RANSAC gates.
  double ransac_pixel_threshold = 2.0;
  double ransac_3d_threshold = 0.1;

  [[nodiscard]] std::size_t descriptorByteWidth() const {
    if (descriptor_kind == DescriptorKind::Binary) {
      return static_cast<std::size_t>((descriptor_size + 7) / 8);
    }
    return static_cast<std::size_t>(descriptor_size) * sizeof(float);
  }
};

struct CameraConfig {
  CameraId camera_id;
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  Pose6 T_I_C;  // camera in body frame
};

struct Keypoint {
  Eigen::Vector2d uv = Eigen::Vector2d::Zero();
  double depth = -1.0;  // meters along the optical axis, <= 0 means none
  std::vector<std::uint8_t> descriptor;
  int feature_type = 0;
  std::int64_t track_id = -1;
  LandmarkId landmark;  // backreference, invalid if not associated

  [[nodiscard]] bool hasDepth() const { return depth > 0.0; }
};

struct VisualFrame {
  CameraId camera;
  std::vector<Keypoint> keypoints;
};

struct Vertex {
  VertexId id;
  MissionId mission;
  std::int64_t timestamp_ns = 0;
  Pose6 T_M_I;  // body pose in mission frame
  Eigen::Vector3d v_M = Eigen::Vector3d::Zero();
  Eigen::Vector3d bias_gyro = Eigen::Vector3d::Zero();
  Eigen::Vector3d bias_accel = Eigen::Vector3d::Zero();
  std::vector<VisualFrame> frames;
};

struct Mission {
  MissionId id;
  Pose6 T_G_M;  // mission frame in global frame
  bool baseframe_known = false;
};

struct KeypointRef {
  VertexId vertex;
  std::uint32_t frame = 0;
  std::uint32_t keypoint = 0;

  auto operator<=>(const KeypointRef&) const = default;
};

struct Landmark {
  LandmarkId id;
  VertexId host;
  Eigen::Vector3d p_M = Eigen::Vector3d::Zero();  // in the host vertex's mission frame
  LandmarkKind kind = LandmarkKind::Triangulated;
  LandmarkQuality quality = LandmarkQuality::Unknown;
  int class_label = -1;  // semantic class, -1 if none
  std::vector<std::uint8_t> descriptor;  // representative descriptor, may be empty
  int feature_type = 0;
  std::vector<KeypointRef> observations;
};

struct OdometryEdge {
  Pose6 T_A_B;
  Matrix6d covariance = Matrix6d::Identity();
};

struct ImuEdge {
  Eigen::Quaterniond delta_q = Eigen::Quaterniond::Identity();
  Eigen::Vector3d delta_v = Eigen::Vector3d::Zero();
  Eigen::Vector3d delta_p = Eigen::Vector3d::Zero();
  double delta_t = 0.0;
  Matrix9d covariance = Matrix9d::Identity();
  Eigen::Vector3d bias_gyro_ref = Eigen::Vector3d::Zero();
  Eigen::Vector3d bias_accel_ref = Eigen::Vector3d::Zero();
};

struct LoopClosureEdge {
  Pose6 T_A_B;
  Matrix6d covariance = Matrix6d::Identity();
  double switch_value = 1.0;
  double switch_prior_var = 0.01;
  LoopClosureMethod method = LoopClosureMethod::Visual;
};

struct AbsolutePoseEdge {
  Pose6 T_G_I;
  Matrix6d covariance = Matrix6d::Identity();
};

using EdgePayload = std::variant<OdometryEdge, ImuEdge, LoopClosureEdge, AbsolutePoseEdge>;

struct Edge {
  EdgeId id;
  VertexId from;
  VertexId to;  // unused for AbsolutePose
  EdgePayload payload;

  [[nodiscard]] bool isOdometryLike() const {
    return std::holds_alternative<OdometryEdge>(payload) ||
           std::holds_alternative<ImuEdge>(payload);
  }
};

struct ImuSample {
  double t = 0.0;  // seconds
  Eigen::Vector3d gyro = Eigen::Vector3d::Zero();
  Eigen::Vector3d accel = Eigen::Vector3d::Zero();
};

// Factor-graph map over one or more missions. Single-writer, multi-reader;
// copyable as a whole value.
class VIMap {
 public:
  MissionId addMission(const Mission& mission);
  VertexId addVertex(const Vertex& vertex);
  EdgeId addEdge(const Edge& edge);
  LandmarkId addLandmark(const Landmark& landmark);

  // Wires the observation into both the landmark and the keypoint backref.
  void addObservation(const LandmarkId& landmark_id, const KeypointRef& ref);

  void removeVertex(const VertexId& id);
  void removeEdge(const EdgeId& id);
  void removeLandmark(const LandmarkId& id);

  // Moves all observations of `victim` onto `survivor` and erases `victim`.
  void mergeLandmarks(const LandmarkId& survivor, const LandmarkId& victim);

  [[nodiscard]] bool hasMission(const MissionId& id) const { return missions_.count(id) > 0; }
  [[nodiscard]] bool hasVertex(const VertexId& id) const { return vertices_.count(id) > 0; }
  [[nodiscard]] bool hasEdge(const EdgeId& id) const { return edges_.count(id) > 0; }
  [[nodiscard]] bool hasLandmark(const LandmarkId& id) const { return landmarks_.count(id) > 0; }

  [[nodiscard]] const Mission& mission(const MissionId& id) const;
  [[nodiscard]] Mission& mission(const MissionId& id);
  [[nodiscard]] const Vertex& vertex(const VertexId& id) const;
  [[nodiscard]] Vertex& vertex(const VertexId& id);
  [[nodiscard]] const Edge& edge(const EdgeId& id) const;
  [[nodiscard]] Edge& edge(const EdgeId& id);
  [[nodiscard]] const Landmark& landmark(const LandmarkId& id) const;
  [[nodiscard]] Landmark& landmark(const LandmarkId& id);

  [[nodiscard]] const std::map<MissionId, Mission>& missions() const { return missions_; }
  [[nodiscard]] const std::map<VertexId, Vertex>& vertices() const { return vertices_; }
  [[nodiscard]] const std::map<EdgeId, Edge>& edges() const { return edges_; }
  [[nodiscard]] const std::map<LandmarkId, Landmark>& landmarks() const { return landmarks_; }
  [[nodiscard]] std::map<LandmarkId, Landmark>& landmarksMutable() { return landmarks_; }

  void setFeatureType(const FeatureTypeConfig& config);
  void setCamera(const CameraConfig& config);
  [[nodiscard]] const FeatureTypeConfig& featureType(int id) const;
  [[nodiscard]] const CameraConfig& camera(const CameraId& id) const;
  [[nodiscard]] const std::map<int, FeatureTypeConfig>& featureTypes() const {
    return feature_types_;
  }
  [[nodiscard]] const std::map<CameraId, CameraConfig>& cameras() const { return cameras_; }

  void setAttachment(const VertexId& vertex_id, std::vector<std::uint8_t> blob);
  [[nodiscard]] const std::vector<std::uint8_t>* attachment(const VertexId& vertex_id) const;
  [[nodiscard]] const std::map<VertexId, std::vector<std::uint8_t>>& attachments() const {
    return attachments_;
  }

  void setImuSamples(const EdgeId& edge_id, std::vector<ImuSample> samples);
  [[nodiscard]] const std::vector<ImuSample>* imuSamples(const EdgeId& edge_id) const;
  [[nodiscard]] const std::map<EdgeId, std::vector<ImuSample>>& imuSampleStore() const {
    return imu_samples_;
  }

  [[nodiscard]] const std::vector<EdgeId>& edgesOfVertex(const VertexId& id) const;

  // Vertices of a mission ordered along the trajectory (by timestamp, id ties).
  [[nodiscard]] std::vector<VertexId> missionVertexChain(const MissionId& id) const;

  // Global pose of a vertex through its mission baseframe.
  [[nodiscard]] Pose6 globalPose(const VertexId& id) const;

  [[nodiscard]] const Keypoint& keypoint(const KeypointRef& ref) const;
  [[nodiscard]] Keypoint& keypointMutable(const KeypointRef& ref);

  // Lowest anchored mission id, if any mission is anchored.
  [[nodiscard]] std::optional<MissionId> firstAnchoredMission() const;

  // Referential-integrity walk; returns human-readable problems, empty if clean.
  [[nodiscard]] std::vector<std::string> checkConsistency() const;

 private:
  std::map<MissionId, Mission> missions_;
  std::map<VertexId, Vertex> vertices_;
  std::map<EdgeId, Edge> edges_;
  std::map<LandmarkId, Landmark> landmarks_;
  std::map<int, FeatureTypeConfig> feature_types_;
  std::map<CameraId, CameraConfig> cameras_;
  std::map<VertexId, std::vector<std::uint8_t>> attachments_;
  std::map<EdgeId, std::vector<ImuSample>> imu_samples_;

  std::map<VertexId, std::vector<EdgeId>> edges_by_vertex_;
};

void requireConsistent(const VIMap& map, const std::string& context);

}  // namespace atlas
