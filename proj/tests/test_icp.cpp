#include <doctest.h>

#include <random>

#include "atlas/icp.h"
#include "atlas/registration.h"
#include "atlas/synthworld.h"

using namespace atlas;

namespace {

PointCloud randomCloud(std::mt19937_64& rng, int n, double scale = 5.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  PointCloud cloud;
  for (int i = 0; i < n; ++i) cloud.emplace_back(u(rng), u(rng), u(rng));
  return cloud;
}

Pose6 makePose(const Eigen::Vector3d& rot, const Eigen::Vector3d& t) {
  Pose6 p;
  p.q = so3Exp(rot);
  p.t = t;
  p.normalize();
  return p;
}

}  // namespace

TEST_CASE("cloud encode/decode round trip") {
  std::mt19937_64 rng(1);
  const PointCloud cloud = randomCloud(rng, 100);
  const PointCloud back = decodeCloud(encodeCloud(cloud));
  REQUIRE(back.size() == cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK((back[i] - cloud[i]).norm() < 1e-6);  // float32 storage
  }
  CHECK_THROWS(decodeCloud(std::vector<std::uint8_t>(5, 0)));
}

TEST_CASE("icp on identical clouds is identity") {
  std::mt19937_64 rng(2);
  const PointCloud cloud = randomCloud(rng, 200);
  const IcpResult result = icpPointToPoint(cloud, cloud, Pose6::identity());
  REQUIRE(result.ok());
  CHECK(result.converged);
  CHECK(result.T_target_source.isApprox(Pose6::identity(), 1e-12));
  CHECK(result.rms < 1e-12);
}

TEST_CASE("icp recovers a small planted transform") {
  std::mt19937_64 rng(3);
  const PointCloud source = randomCloud(rng, 1000);
  const Pose6 planted = makePose({0, 0, 5.0 * M_PI / 180.0}, {0.1, 0, 0});
  PointCloud target;
  for (const auto& p : source) target.push_back(planted * p);

  const IcpResult result = icpPointToPoint(source, target, Pose6::identity());
  REQUIRE(result.ok());
  CHECK(result.converged);
  CHECK(rotationDistance(result.T_target_source, planted) < 1e-6);
  CHECK((result.T_target_source.t - planted.t).norm() < 1e-6);

  // RMS non-increasing across iterations.
  for (std::size_t i = 1; i < result.rms_history.size(); ++i) {
    CHECK(result.rms_history[i] <= result.rms_history[i - 1] + 1e-12);
  }
}

TEST_CASE("icp reports missing correspondences on disjoint clouds") {
  std::mt19937_64 rng(4);
  const PointCloud source = randomCloud(rng, 50);
  PointCloud target;
  for (const auto& p : source) target.push_back(p + Eigen::Vector3d(100, 0, 0));
  const IcpResult result = icpPointToPoint(source, target, Pose6::identity());
  CHECK(result.status == IcpStatus::NoCorrespondences);
}

TEST_CASE("icp rejects tiny clouds") {
  PointCloud small(5, Eigen::Vector3d::Zero());
  CHECK(icpPointToPoint(small, small, Pose6::identity()).status == IcpStatus::TooFewPoints);
}

TEST_CASE("icp equivariance under a pre-transform of the source") {
  std::mt19937_64 rng(5);
  const PointCloud source = randomCloud(rng, 500);
  const Pose6 planted = makePose({0.02, -0.01, 0.03}, {0.05, 0.02, -0.04});
  PointCloud target;
  for (const auto& p : source) target.push_back(planted * p);

  const Pose6 shift = makePose({0, 0, 0.02}, {0.03, 0, 0});
  PointCloud shifted;
  for (const auto& p : source) shifted.push_back(shift * p);

  const IcpResult direct = icpPointToPoint(source, target, Pose6::identity());
  const IcpResult composed = icpPointToPoint(shifted, target, Pose6::identity());
  REQUIRE(direct.ok());
  REQUIRE(composed.ok());
  // icp(shift*S -> target) composed with shift should equal icp(S -> target).
  const Pose6 recovered = composed.T_target_source * shift;
  CHECK(rotationDistance(recovered, direct.T_target_source) < 1e-6);
  CHECK((recovered.t - direct.T_target_source.t).norm() < 1e-6);
}

TEST_CASE("register and commit adds a loop closure edge from scans") {
  WorldSpec spec;
  spec.seed = 9;
  spec.landmark_count = 50;
  spec.steps_per_robot = 30;
  spec.with_scans = true;
  spec.structure_points = 3000;
  spec.scan_range = 10.0;
  spec.robot_waypoints = {{{-3, 0, 1}, {3, 0, 1}}};
  const GroundTruthWorld world = generateWorld(spec);
  std::vector<SimulatedMission> sims;
  VIMap map = buildFullMap(world, &sims);
  ensureAnchor(map);

  const VertexId a = sims[0].vertex_ids[5];
  const VertexId b = sims[0].vertex_ids[10];
  const std::size_t edges_before = map.edges().size();
  // Structure samples at scan boundaries only exist in one of the two scans;
  // a tight gate keeps the exact correspondences in charge.
  IcpOptions icp_options;
  icp_options.max_correspondence_distance = 0.3;
  const RegistrationReport report = registerAndCommit(map, a, b, icp_options);
  REQUIRE(report.success);
  CHECK(map.edges().size() == edges_before + 1);

  // The recovered transform matches the ground-truth relative pose.
  const Pose6 gt_rel = sims[0].gt_T_M_I[5].inverse() * sims[0].gt_T_M_I[10];
  CHECK(rotationDistance(report.icp.T_target_source, gt_rel) < 1e-3);
  CHECK((report.icp.T_target_source.t - gt_rel.t).norm() < 1e-3);

  // Second call is a duplicate.
  const RegistrationReport again = registerAndCommit(map, a, b, icp_options);
  CHECK(again.commit.duplicates_skipped == 1);
  CHECK(map.edges().size() == edges_before + 1);
}

TEST_CASE("register and commit fails cleanly without overlap") {
  VIMap map;
  IdGenerator gen(6);
  Mission m;
  m.id = gen.next<MissionId>();
  map.addMission(m);
  Vertex a, b;
  a.id = gen.next<VertexId>();
  a.mission = m.id;
  a.timestamp_ns = 0;
  b.id = gen.next<VertexId>();
  b.mission = m.id;
  b.timestamp_ns = 1;
  map.addVertex(a);
  map.addVertex(b);
  std::mt19937_64 rng(7);
  PointCloud ca = randomCloud(rng, 50);
  PointCloud cb;
  for (const auto& p : ca) cb.push_back(p + Eigen::Vector3d(500, 0, 0));
  map.setAttachment(a.id, encodeCloud(ca));
  map.setAttachment(b.id, encodeCloud(cb));

  const std::size_t edges_before = map.edges().size();
  const RegistrationReport report = registerAndCommit(map, a.id, b.id);
  CHECK(!report.success);
  CHECK(map.edges().size() == edges_before);
}
