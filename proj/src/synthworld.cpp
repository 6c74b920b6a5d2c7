#include "atlas/synthworld.h"

#include <cmath>
#include <random>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "atlas/bytes.h"
#include "atlas/imu_preintegration.h"
#include "atlas/landmark_quality.h"
#include "atlas/track_io.h"
#include "atlas/triangulation.h"

namespace atlas {

namespace {

Eigen::Vector3d parseVec3(const std::string& text) {
  std::istringstream iss(text);
  Eigen::Vector3d v;
  if (!(iss >> v.x() >> v.y() >> v.z())) {
    throw std::runtime_error("expected 'x y z', got '" + text + "'");
  }
  return v;
}

std::vector<Eigen::Vector3d> parseWaypoints(const std::string& text) {
  std::vector<Eigen::Vector3d> out;
  for (const auto& part : splitString(text, ';')) {
    const std::string t = trimString(part);
    if (t.empty()) continue;
    out.push_back(parseVec3(t));
  }
  return out;
}

// Catmull-Rom through the waypoints, clamped ends, u in [0, 1].
Eigen::Vector3d splinePosition(const std::vector<Eigen::Vector3d>& w, double u) {
  const int n = static_cast<int>(w.size());
  if (n == 2) return (1.0 - u) * w[0] + u * w[1];
  const double s = u * (n - 1);
  int i = std::min(static_cast<int>(s), n - 2);
  const double t = s - i;
  const Eigen::Vector3d p0 = w[std::max(i - 1, 0)];
  const Eigen::Vector3d p1 = w[i];
  const Eigen::Vector3d p2 = w[i + 1];
  const Eigen::Vector3d p3 = w[std::min(i + 2, n - 1)];
  const double t2 = t * t, t3 = t2 * t;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
}

Pose6 yawPose(const Eigen::Vector3d& position, double yaw) {
  Pose6 p;
  p.q = so3Exp(Eigen::Vector3d(0, 0, yaw));
  p.t = position;
  p.normalize();
  return p;
}

// Forward-looking camera: optical axis (camera z) along body x, camera x to
// the body's right (-y), camera y down (-z).
Pose6 forwardCameraMount() {
  Eigen::Matrix3d r;
  r.col(0) = Eigen::Vector3d(0, -1, 0);
  r.col(1) = Eigen::Vector3d(0, 0, -1);
  r.col(2) = Eigen::Vector3d(1, 0, 0);
  Pose6 p;
  p.q = Eigen::Quaterniond(r);
  p.normalize();
  return p;
}

std::vector<std::uint8_t> randomDescriptor(std::mt19937_64& rng, const WorldSpec& spec) {
  if (spec.descriptor_kind == DescriptorKind::Binary) {
    std::vector<std::uint8_t> out((spec.descriptor_size + 7) / 8);
    std::uniform_int_distribution<int> d(0, 255);
    for (auto& b : out) b = static_cast<std::uint8_t>(d(rng));
    return out;
  }
  std::normal_distribution<float> n(0.0f, 1.0f);
  std::vector<float> v(spec.descriptor_size);
  double norm = 0.0;
  for (auto& x : v) {
    x = n(rng);
    norm += x * x;
  }
  norm = std::sqrt(std::max(norm, 1e-12));
  for (auto& x : v) x = static_cast<float>(x / norm);
  return floatsToBytes(v);
}

std::vector<std::uint8_t> perturbDescriptor(std::mt19937_64& rng, const WorldSpec& spec,
                                            const std::vector<std::uint8_t>& base) {
  std::vector<std::uint8_t> out = base;
  if (spec.descriptor_kind == DescriptorKind::Binary) {
    std::uniform_int_distribution<int> bit(0, spec.descriptor_size - 1);
    for (int i = 0; i < spec.descriptor_flip_bits; ++i) {
      const int b = bit(rng);
      out[b / 8] ^= static_cast<std::uint8_t>(1u << (b % 8));
    }
    return out;
  }
  std::vector<float> v = bytesToFloats(out);
  std::normal_distribution<float> n(0.0f, static_cast<float>(spec.descriptor_sigma));
  double norm = 0.0;
  for (auto& x : v) {
    x += n(rng);
    norm += x * x;
  }
  norm = std::sqrt(std::max(norm, 1e-12));
  for (auto& x : v) x = static_cast<float>(x / norm);
  return floatsToBytes(v);
}

}  // namespace

WorldSpec WorldSpec::fromConfig(const Config& config) {
  WorldSpec s;
  s.seed = config.getUint64("world.seed", s.seed);
  s.landmark_count = config.getInt("world.landmark_count", s.landmark_count);
  if (config.has("world.landmark_box_min")) {
    s.landmark_box_min = parseVec3(config.getString("world.landmark_box_min"));
  }
  if (config.has("world.landmark_box_max")) {
    s.landmark_box_max = parseVec3(config.getString("world.landmark_box_max"));
  }
  s.steps_per_robot = config.getInt("world.steps_per_robot", s.steps_per_robot);
  s.sample_rate_hz = config.getDouble("world.sample_rate_hz", s.sample_rate_hz);
  s.odometry_sigma_translation =
      config.getDouble("world.odometry_sigma_translation", s.odometry_sigma_translation);
  s.odometry_sigma_rotation_deg =
      config.getDouble("world.odometry_sigma_rotation_deg", s.odometry_sigma_rotation_deg);
  s.pixel_sigma = config.getDouble("world.pixel_sigma", s.pixel_sigma);
  s.depth_sigma = config.getDouble("world.depth_sigma", s.depth_sigma);
  s.fx = config.getDouble("world.fx", s.fx);
  s.fy = config.getDouble("world.fy", s.fy);
  s.cx = config.getDouble("world.cx", s.cx);
  s.cy = config.getDouble("world.cy", s.cy);
  s.image_width = config.getInt("world.image_width", s.image_width);
  s.image_height = config.getInt("world.image_height", s.image_height);
  s.max_depth = config.getDouble("world.max_depth", s.max_depth);
  s.descriptor_kind = config.getString("world.descriptor_kind", "binary") == "float"
                          ? DescriptorKind::Float
                          : DescriptorKind::Binary;
  s.descriptor_size = config.getInt("world.descriptor_size", s.descriptor_size);
  s.descriptor_flip_bits = config.getInt("world.descriptor_flip_bits", s.descriptor_flip_bits);
  s.descriptor_sigma = config.getDouble("world.descriptor_sigma", s.descriptor_sigma);
  s.match_threshold = config.getDouble("world.match_threshold", s.match_threshold);
  s.lowe_ratio = config.getDouble("world.lowe_ratio", s.lowe_ratio);
  s.distractors_per_vertex = config.getInt("world.distractors_per_vertex", s.distractors_per_vertex);
  s.emit_depth = config.getBool("world.emit_depth", s.emit_depth);
  s.with_imu = config.getBool("world.with_imu", s.with_imu);
  s.imu_rate_hz = config.getInt("world.imu_rate_hz", s.imu_rate_hz);
  s.imu_sigma_gyro = config.getDouble("world.imu_sigma_gyro", s.imu_sigma_gyro);
  s.imu_sigma_accel = config.getDouble("world.imu_sigma_accel", s.imu_sigma_accel);
  s.with_scans = config.getBool("world.with_scans", s.with_scans);
  s.structure_points = config.getInt("world.structure_points", s.structure_points);
  s.scan_range = config.getDouble("world.scan_range", s.scan_range);
  s.scan_sigma = config.getDouble("world.scan_sigma", s.scan_sigma);
  s.semantic_object_count = config.getInt("world.semantic_object_count", s.semantic_object_count);
  s.semantic_classes = config.getInt("world.semantic_classes", s.semantic_classes);
  s.semantic_descriptor_dim =
      config.getInt("world.semantic_descriptor_dim", s.semantic_descriptor_dim);
  s.semantic_descriptor_sigma =
      config.getDouble("world.semantic_descriptor_sigma", s.semantic_descriptor_sigma);
  s.semantic_range = config.getDouble("world.semantic_range", s.semantic_range);
  for (int r = 0;; ++r) {
    const std::string key = "robot." + std::to_string(r) + ".waypoints";
    if (!config.has(key)) break;
    s.robot_waypoints.push_back(parseWaypoints(config.getString(key)));
  }
  return s;
}

GroundTruthWorld generateWorld(const WorldSpec& spec) {
  for (const auto& waypoints : spec.robot_waypoints) {
    if (waypoints.size() < 2) {
      throw std::invalid_argument("generateWorld: robot needs at least 2 waypoints");
    }
  }

  GroundTruthWorld world;
  world.spec = spec;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  for (int i = 0; i < spec.landmark_count; ++i) {
    Eigen::Vector3d p;
    for (int d = 0; d < 3; ++d) {
      p[d] = spec.landmark_box_min[d] +
             u01(rng) * (spec.landmark_box_max[d] - spec.landmark_box_min[d]);
    }
    world.landmarks.push_back(p);
    world.landmark_descriptors.push_back(randomDescriptor(rng, spec));
  }

  if (spec.with_scans) {
    for (int i = 0; i < spec.structure_points; ++i) {
      Eigen::Vector3d p;
      for (int d = 0; d < 3; ++d) {
        p[d] = spec.landmark_box_min[d] +
               u01(rng) * (spec.landmark_box_max[d] - spec.landmark_box_min[d]);
      }
      world.structure.push_back(p);
    }
  }

  std::normal_distribution<float> nf(0.0f, 1.0f);
  for (int i = 0; i < spec.semantic_object_count; ++i) {
    Eigen::Vector3d p;
    if (i < static_cast<int>(spec.semantic_object_positions.size())) {
      p = spec.semantic_object_positions[i];
    } else {
      for (int d = 0; d < 3; ++d) {
        p[d] = spec.landmark_box_min[d] +
               u01(rng) * (spec.landmark_box_max[d] - spec.landmark_box_min[d]);
      }
    }
    world.object_positions.push_back(p);
    world.object_classes.push_back(i % std::max(spec.semantic_classes, 1));
    std::vector<float> d(spec.semantic_descriptor_dim);
    double norm = 0.0;
    for (auto& x : d) {
      x = nf(rng);
      norm += x * x;
    }
    norm = std::sqrt(std::max(norm, 1e-12));
    for (auto& x : d) x = static_cast<float>(x / norm);
    world.object_descriptors.push_back(d);
  }

  // Trajectories: spline positions, tangent yaw, central-difference velocity.
  const double dt = 1.0 / spec.sample_rate_hz;
  for (const auto& waypoints : spec.robot_waypoints) {
    RobotTruth robot;
    const int steps = spec.steps_per_robot;
    std::vector<Eigen::Vector3d> positions(steps);
    for (int k = 0; k < steps; ++k) {
      positions[k] = splinePosition(waypoints, steps == 1 ? 0.0 : double(k) / (steps - 1));
    }
    double yaw = 0.0;
    bool yaw_valid = false;
    for (int k = 0; k < steps; ++k) {
      const Eigen::Vector3d ahead = positions[std::min(k + 1, steps - 1)];
      const Eigen::Vector3d behind = positions[std::max(k - 1, 0)];
      const Eigen::Vector3d tangent = ahead - behind;
      if (tangent.head<2>().norm() > 1e-9) {
        yaw = std::atan2(tangent.y(), tangent.x());
        yaw_valid = true;
      } else if (!yaw_valid) {
        yaw = 0.0;
      }
      robot.T_G_I.push_back(yawPose(positions[k], yaw));
      robot.timestamps_ns.push_back(static_cast<std::int64_t>(std::llround(k * dt * 1e9)));
    }
    for (int k = 0; k < steps; ++k) {
      const Eigen::Vector3d ahead = positions[std::min(k + 1, steps - 1)];
      const Eigen::Vector3d behind = positions[std::max(k - 1, 0)];
      const double span = dt * (std::min(k + 1, steps - 1) - std::max(k - 1, 0));
      robot.velocity_G.push_back(span > 0 ? ((ahead - behind) / span).eval()
                                          : Eigen::Vector3d::Zero());
    }
    world.robots.push_back(std::move(robot));
  }
  return world;
}

namespace {

// Regenerates IMU sample chunks from the trajectory and rebuilds the ground
// truth chain by preintegrating the clean samples, so that IMU residuals
// vanish exactly at the ground truth.
void synthesizeImu(const WorldSpec& spec, RobotTruth& robot,
                   std::vector<std::vector<ImuSample>>* clean_chunks) {
  const double dt_v = 1.0 / spec.sample_rate_hz;
  const double dt_i = 1.0 / spec.imu_rate_hz;
  const Eigen::Vector3d g(0, 0, -9.81);
  const int steps = static_cast<int>(robot.T_G_I.size());

  std::vector<Pose6> chained{robot.T_G_I.front()};
  std::vector<Eigen::Vector3d> velocities{robot.velocity_G.front()};

  for (int k = 0; k + 1 < steps; ++k) {
    // Segment rates from the spline truth.
    const Eigen::Vector3d omega =
        so3Log(robot.T_G_I[k].q.conjugate() * robot.T_G_I[k + 1].q) / dt_v;
    const Eigen::Vector3d accel_G =
        (robot.velocity_G[k + 1] - robot.velocity_G[k]) / dt_v;

    std::vector<ImuSample> chunk;
    const int n = std::max(2, static_cast<int>(std::lround(dt_v / dt_i)) + 1);
    const Eigen::Quaterniond q0 = chained.back().q;
    for (int s = 0; s < n; ++s) {
      const double tau = dt_v * s / (n - 1);
      ImuSample sample;
      sample.t = k * dt_v + tau;
      sample.gyro = omega;
      const Eigen::Quaterniond q_tau = q0 * so3Exp(omega * tau);
      sample.accel = q_tau.conjugate() * (accel_G - g);
      chunk.push_back(sample);
    }

    // Chain the ground truth through the same preintegration the optimizer
    // uses; residuals at this chain are exactly zero.
    const ImuEdge delta =
        preintegrateImu(chunk, Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero());
    const Pose6& prev = chained.back();
    const Eigen::Vector3d v_prev = velocities.back();
    Pose6 next;
    next.q = prev.q * delta.delta_q;
    next.t = prev.t + v_prev * dt_v + 0.5 * g * dt_v * dt_v + prev.q * delta.delta_p;
    next.normalize();
    velocities.push_back(v_prev + g * dt_v + prev.q * delta.delta_v);
    chained.push_back(next);
    clean_chunks->push_back(std::move(chunk));
  }

  robot.T_G_I = chained;
  robot.velocity_G = velocities;
}

}  // namespace

SimulatedMission simulateMission(const GroundTruthWorld& world_in, int robot_index) {
  const WorldSpec& spec = world_in.spec;
  if (robot_index < 0 || robot_index >= static_cast<int>(world_in.robots.size())) {
    throw std::out_of_range("simulateMission: no such robot");
  }
  GroundTruthWorld world = world_in;  // IMU synthesis rewrites the local chain
  RobotTruth& robot = world.robots[robot_index];

  std::mt19937_64 rng(splitmix64(spec.seed ^ (0x9E0B07ULL + 31ULL * robot_index)));
  std::normal_distribution<double> gauss(0.0, 1.0);

  SimulatedMission sim;
  sim.mission_id = deriveId<MissionId>(spec.seed, 0xA11CE, robot_index, 7, 0x5EED);
  sim.camera_id = deriveId<CameraId>(spec.seed, 0xCA3E2A, robot_index, 1, 0x5EED);

  std::vector<std::vector<ImuSample>> clean_chunks;
  if (spec.with_imu) synthesizeImu(spec, robot, &clean_chunks);

  const int steps = static_cast<int>(robot.T_G_I.size());
  sim.T_G_M_true = robot.T_G_I.front();
  const Pose6 T_M_G = sim.T_G_M_true.inverse();

  for (int k = 0; k < steps; ++k) {
    sim.vertex_ids.push_back(deriveId<VertexId>(spec.seed, robot_index, k, 0xF00D, 0x5EED));
    sim.timestamps_ns.push_back(robot.timestamps_ns.size() > static_cast<std::size_t>(k)
                                    ? robot.timestamps_ns[k]
                                    : static_cast<std::int64_t>(
                                          std::llround(k * 1e9 / spec.sample_rate_hz)));
    sim.gt_T_M_I.push_back(T_M_G * robot.T_G_I[k]);
    sim.gt_v_M.push_back(T_M_G.q * robot.velocity_G[k]);
  }

  // Odometry with multiplicative noise; drift accumulates in the integration.
  const double sigma_rot = spec.odometry_sigma_rotation_deg * M_PI / 180.0;
  const double sigma_t = spec.odometry_sigma_translation;
  sim.odometry_covariance = Matrix6d::Identity();
  sim.odometry_covariance.topLeftCorner<3, 3>() *= std::pow(std::max(sigma_rot, 1e-4), 2);
  sim.odometry_covariance.bottomRightCorner<3, 3>() *= std::pow(std::max(sigma_t, 1e-4), 2);

  sim.odometry_estimate.push_back(Pose6::identity());
  for (int k = 0; k + 1 < steps; ++k) {
    const Pose6 rel_gt = sim.gt_T_M_I[k].inverse() * sim.gt_T_M_I[k + 1];
    Vector6d noise = Vector6d::Zero();
    for (int i = 0; i < 3; ++i) noise[i] = sigma_rot * gauss(rng);
    for (int i = 0; i < 3; ++i) noise[3 + i] = sigma_t * gauss(rng);
    const Pose6 measured = rel_gt * se3Exp(noise);
    sim.odometry_measurements.push_back(measured);
    sim.odometry_estimate.push_back(sim.odometry_estimate.back() * measured);
  }

  // IMU: emitted samples are the clean chunk plus bias plus noise.
  if (spec.with_imu) {
    for (auto& chunk : clean_chunks) {
      std::vector<ImuSample> emitted = chunk;
      for (auto& s : emitted) {
        s.gyro += spec.imu_bias_gyro;
        s.accel += spec.imu_bias_accel;
        if (spec.imu_sigma_gyro > 0) {
          s.gyro += spec.imu_sigma_gyro * Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
        }
        if (spec.imu_sigma_accel > 0) {
          s.accel += spec.imu_sigma_accel * Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
        }
      }
      sim.imu_chunks.push_back(std::move(emitted));
    }
  }

  // Feature tracks: contiguous visibility runs, fresh track id per run, the
  // landmark's descriptor perturbed per observation. Distractors are one-off
  // tracks with random descriptors.
  std::ostringstream tracks;
  tracks << std::setprecision(17);
  std::int64_t next_track = 1;
  std::vector<std::int64_t> open_track(world.landmarks.size(), -1);
  const Pose6 T_I_C = forwardCameraMount();
  for (int k = 0; k < steps; ++k) {
    const Pose6 T_C_G = (robot.T_G_I[k] * T_I_C).inverse();
    for (std::size_t l = 0; l < world.landmarks.size(); ++l) {
      const Eigen::Vector3d p_C = T_C_G * world.landmarks[l];
      bool visible = p_C.z() > 0.2 && p_C.z() < spec.max_depth;
      Eigen::Vector2d uv;
      if (visible) {
        uv = projectToPixel(p_C, spec.fx, spec.fy, spec.cx, spec.cy);
        visible = uv.x() >= 0 && uv.x() < spec.image_width && uv.y() >= 0 &&
                  uv.y() < spec.image_height;
      }
      if (!visible) {
        open_track[l] = -1;
        continue;
      }
      if (open_track[l] < 0) open_track[l] = next_track++;
      Eigen::Vector2d noisy = uv;
      if (spec.pixel_sigma > 0) {
        noisy.x() += spec.pixel_sigma * gauss(rng);
        noisy.y() += spec.pixel_sigma * gauss(rng);
      }
      const auto descriptor = perturbDescriptor(rng, spec, world.landmark_descriptors[l]);
      tracks << open_track[l] << ',' << sim.vertex_ids[k].hex() << ',' << sim.camera_id.hex()
             << ',' << noisy.x() << ',' << noisy.y() << ',';
      if (spec.emit_depth) {
        double depth = p_C.z();
        if (spec.depth_sigma > 0) depth += spec.depth_sigma * gauss(rng);
        tracks << depth;
      }
      tracks << ",0," << hexEncode(descriptor) << "\n";
    }
    std::uniform_real_distribution<double> ux(0.0, spec.image_width);
    std::uniform_real_distribution<double> uy(0.0, spec.image_height);
    for (int d = 0; d < spec.distractors_per_vertex; ++d) {
      tracks << next_track++ << ',' << sim.vertex_ids[k].hex() << ',' << sim.camera_id.hex()
             << ',' << ux(rng) << ',' << uy(rng) << ',';
      if (spec.emit_depth) tracks << 1.0 + 10.0 * std::abs(gauss(rng));
      tracks << ",0," << hexEncode(randomDescriptor(rng, spec)) << "\n";
    }
  }
  sim.tracks_csv = tracks.str();

  // Scans: structure points within range, expressed in the body frame.
  if (spec.with_scans) {
    for (int k = 0; k < steps; ++k) {
      PointCloud scan;
      const Pose6 T_I_G = robot.T_G_I[k].inverse();
      for (const auto& p : world.structure) {
        if ((p - robot.T_G_I[k].t).norm() > spec.scan_range) continue;
        Eigen::Vector3d q = T_I_G * p;
        if (spec.scan_sigma > 0) {
          q += spec.scan_sigma * Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
        }
        scan.push_back(q);
      }
      sim.scans.push_back(std::move(scan));
    }
  }

  // Semantic observations: object center in the camera frame plus a
  // perturbed copy of the object descriptor.
  if (spec.semantic_object_count > 0) {
    std::ostringstream sem;
    sem << std::setprecision(17);
    std::vector<std::int64_t> open_object(world.object_positions.size(), -1);
    std::int64_t next_object_track = 1;
    for (int k = 0; k < steps; ++k) {
      const Pose6 T_C_G = (robot.T_G_I[k] * T_I_C).inverse();
      for (std::size_t o = 0; o < world.object_positions.size(); ++o) {
        const Eigen::Vector3d p_C = T_C_G * world.object_positions[o];
        const bool visible = p_C.z() > 0.2 && p_C.norm() < spec.semantic_range;
        if (!visible) {
          open_object[o] = -1;
          continue;
        }
        if (open_object[o] < 0) open_object[o] = next_object_track++;
        std::vector<float> d = world.object_descriptors[o];
        double norm = 0.0;
        for (auto& x : d) {
          x += static_cast<float>(spec.semantic_descriptor_sigma * gauss(rng));
          norm += x * x;
        }
        norm = std::sqrt(std::max(norm, 1e-12));
        for (auto& x : d) x = static_cast<float>(x / norm);
        sem << open_object[o] << ',' << sim.vertex_ids[k].hex() << ',' << sim.camera_id.hex()
            << ',' << world.object_classes[o] << ',' << p_C.x() << ',' << p_C.y() << ','
            << p_C.z() << ',' << hexEncode(floatsToBytes(d)) << "\n";
      }
    }
    sim.semantic_csv = sem.str();
  }

  return sim;
}

void buildMissionMap(VIMap& map, const GroundTruthWorld& world, const SimulatedMission& sim) {
  const WorldSpec& spec = world.spec;

  Mission mission;
  mission.id = sim.mission_id;
  mission.T_G_M = Pose6::identity();
  mission.baseframe_known = false;
  map.addMission(mission);

  CameraConfig cam;
  cam.camera_id = sim.camera_id;
  cam.fx = spec.fx;
  cam.fy = spec.fy;
  cam.cx = spec.cx;
  cam.cy = spec.cy;
  cam.width = spec.image_width;
  cam.height = spec.image_height;
  cam.T_I_C = forwardCameraMount();
  map.setCamera(cam);

  FeatureTypeConfig ft;
  ft.feature_type_id = 0;
  ft.descriptor_kind = spec.descriptor_kind;
  ft.descriptor_size = spec.descriptor_size;
  ft.match_threshold = spec.match_threshold;
  ft.lowe_ratio = spec.lowe_ratio;
  map.setFeatureType(ft);

  const int steps = static_cast<int>(sim.vertex_ids.size());
  for (int k = 0; k < steps; ++k) {
    Vertex v;
    v.id = sim.vertex_ids[k];
    v.mission = sim.mission_id;
    v.timestamp_ns = sim.timestamps_ns[k];
    v.T_M_I = sim.odometry_estimate[k];
    v.bias_gyro = spec.imu_bias_gyro;
    v.bias_accel = spec.imu_bias_accel;
    map.addVertex(v);
  }
  // Velocity initialization from the integrated odometry.
  const double dt = 1.0 / spec.sample_rate_hz;
  for (int k = 0; k < steps; ++k) {
    const int ahead = std::min(k + 1, steps - 1);
    const int behind = std::max(k - 1, 0);
    const double span = dt * (ahead - behind);
    Vertex& v = map.vertex(sim.vertex_ids[k]);
    v.v_M = span > 0
                ? ((sim.odometry_estimate[ahead].t - sim.odometry_estimate[behind].t) / span)
                      .eval()
                : Eigen::Vector3d::Zero();
  }

  for (int k = 0; k + 1 < steps; ++k) {
    Edge e;
    e.id = deriveId<EdgeId>(sim.mission_id.hi, sim.mission_id.lo, k, 0x0D0, 0xED6E);
    e.from = sim.vertex_ids[k];
    e.to = sim.vertex_ids[k + 1];
    OdometryEdge odo;
    odo.T_A_B = sim.odometry_measurements[k];
    odo.covariance = sim.odometry_covariance;
    e.payload = odo;
    map.addEdge(e);
  }

  if (!sim.imu_chunks.empty()) {
    ImuNoise noise;
    noise.sigma_gyro = std::max(spec.imu_sigma_gyro, 1e-5);
    noise.sigma_accel = std::max(spec.imu_sigma_accel, 1e-4);
    for (int k = 0; k + 1 < steps; ++k) {
      Edge e;
      e.id = deriveId<EdgeId>(sim.mission_id.hi, sim.mission_id.lo, k, 0x140, 0xED6E);
      e.from = sim.vertex_ids[k];
      e.to = sim.vertex_ids[k + 1];
      e.payload = preintegrateImu(sim.imu_chunks[k], spec.imu_bias_gyro, spec.imu_bias_accel,
                                  noise);
      map.addEdge(e);
      map.setImuSamples(e.id, sim.imu_chunks[k]);
    }
  }

  ingestFeatureTracks(map, sim.tracks_csv);

  for (std::size_t k = 0; k < sim.scans.size(); ++k) {
    map.setAttachment(sim.vertex_ids[k], encodeCloud(sim.scans[k]));
  }

  evaluateAllLandmarkQualities(map);
}

VIMap buildFullMap(const GroundTruthWorld& world, std::vector<SimulatedMission>* sims) {
  VIMap map;
  for (int r = 0; r < static_cast<int>(world.robots.size()); ++r) {
    const SimulatedMission sim = simulateMission(world, r);
    buildMissionMap(map, world, sim);
    if (sims) sims->push_back(sim);
  }
  return map;
}

std::vector<std::pair<double, Pose6>> groundTruthTrajectory(const GroundTruthWorld& world,
                                                            int robot_index) {
  const RobotTruth& robot = world.robots.at(robot_index);
  std::vector<std::pair<double, Pose6>> out;
  for (std::size_t k = 0; k < robot.T_G_I.size(); ++k) {
    out.emplace_back(static_cast<double>(robot.timestamps_ns[k]) * 1e-9, robot.T_G_I[k]);
  }
  return out;
}

}  // namespace atlas
