#pragma once

#include <string>
#include <vector>

#include "atlas/cloud.h"
#include "atlas/config.h"
#include "atlas/map.h"

namespace atlas {

// Deterministic synthetic world: identical spec -> bit-identical outputs.
struct WorldSpec {
  std::uint64_t seed = 1;

  int landmark_count = 300;
  Eigen::Vector3d landmark_box_min{-12.0, -12.0, 0.5};
  Eigen::Vector3d landmark_box_max{12.0, 12.0, 3.5};

  std::vector<std::vector<Eigen::Vector3d>> robot_waypoints;
  int steps_per_robot = 100;
  double sample_rate_hz = 10.0;

  // Noise.
  double odometry_sigma_translation = 0.0;   // meters per step
  double odometry_sigma_rotation_deg = 0.0;  // degrees per step
  double pixel_sigma = 0.0;
  double depth_sigma = 0.0;

  // Camera rig (single forward camera).
  double fx = 400.0, fy = 400.0, cx = 320.0, cy = 240.0;
  int image_width = 640, image_height = 480;
  double max_depth = 25.0;

  // Descriptor model.
  DescriptorKind descriptor_kind = DescriptorKind::Binary;
  int descriptor_size = 256;  // bits or float dims
  int descriptor_flip_bits = 6;
  double descriptor_sigma = 0.03;
  double match_threshold = 60.0;
  double lowe_ratio = 0.85;
  int distractors_per_vertex = 5;
  bool emit_depth = false;  // depth-bearing tracks (Averaged3D landmarks)

  // IMU.
  bool with_imu = false;
  int imu_rate_hz = 100;
  double imu_sigma_gyro = 0.0;
  double imu_sigma_accel = 0.0;
  Eigen::Vector3d imu_bias_gyro = Eigen::Vector3d::Zero();
  Eigen::Vector3d imu_bias_accel = Eigen::Vector3d::Zero();

  // Depth scans.
  bool with_scans = false;
  int structure_points = 4000;
  double scan_range = 8.0;
  double scan_sigma = 0.0;

  // Semantic objects. Placed uniformly in the landmark box unless explicit
  // positions are given.
  int semantic_object_count = 0;
  std::vector<Eigen::Vector3d> semantic_object_positions;
  int semantic_classes = 4;
  int semantic_descriptor_dim = 16;
  double semantic_descriptor_sigma = 0.02;
  double semantic_range = 10.0;

  static WorldSpec fromConfig(const Config& config);
};

struct RobotTruth {
  std::vector<Pose6> T_G_I;
  std::vector<Eigen::Vector3d> velocity_G;
  std::vector<std::int64_t> timestamps_ns;
};

struct GroundTruthWorld {
  WorldSpec spec;
  std::vector<Eigen::Vector3d> landmarks;
  std::vector<std::vector<std::uint8_t>> landmark_descriptors;
  std::vector<RobotTruth> robots;
  std::vector<Eigen::Vector3d> structure;
  std::vector<Eigen::Vector3d> object_positions;
  std::vector<int> object_classes;
  std::vector<std::vector<float>> object_descriptors;
};

GroundTruthWorld generateWorld(const WorldSpec& spec);

struct SimulatedMission {
  MissionId mission_id;
  CameraId camera_id;
  Pose6 T_G_M_true;
  std::vector<VertexId> vertex_ids;
  std::vector<std::int64_t> timestamps_ns;
  std::vector<Pose6> gt_T_M_I;
  std::vector<Eigen::Vector3d> gt_v_M;
  std::vector<Pose6> odometry_estimate;  // integrated noisy odometry
  std::vector<Pose6> odometry_measurements;
  Matrix6d odometry_covariance = Matrix6d::Identity();
  std::vector<std::vector<ImuSample>> imu_chunks;  // per consecutive pair
  std::string tracks_csv;
  std::string semantic_csv;
  std::vector<PointCloud> scans;  // body frame, per vertex
};

// Simulates one robot: noisy odometry, visible feature tracks with descriptor
// perturbation and distractors, optional IMU sample chunks, scans, and
// semantic observations, all in the ingestion formats of the other modules.
SimulatedMission simulateMission(const GroundTruthWorld& world, int robot_index);

// Ingests a simulated stream into a map: mission (baseframe unknown),
// vertices initialized from odometry, odometry/IMU edges, feature tracks,
// scan attachments. Landmark qualities are evaluated.
void buildMissionMap(VIMap& map, const GroundTruthWorld& world, const SimulatedMission& sim);

// Convenience: simulate every robot into one multi-mission map.
VIMap buildFullMap(const GroundTruthWorld& world, std::vector<SimulatedMission>* sims = nullptr);

// Ground-truth global-frame trajectory of one robot as (t, pose) pairs.
std::vector<std::pair<double, Pose6>> groundTruthTrajectory(const GroundTruthWorld& world,
                                                            int robot_index);

}  // namespace atlas
