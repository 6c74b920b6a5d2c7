#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "atlas/console_ops.h"
#include "atlas/serialization.h"
#include "atlas/synthworld.h"
#include "atlas/trajectory_io.h"

using namespace atlas;

namespace {

VIMap squareMap(std::uint64_t seed, int steps = 40) {
  WorldSpec spec;
  spec.seed = seed;
  spec.landmark_count = 150;
  spec.steps_per_robot = steps;
  spec.robot_waypoints = {{{-5, -5, 1}, {5, -5, 1}, {5, 5, 1}, {-5, 5, 1}, {-5, -5, 1}}};
  return buildFullMap(generateWorld(spec));
}

VIMap straightChain(std::uint64_t seed, int steps, double step_length) {
  WorldSpec spec;
  spec.seed = seed;
  spec.landmark_count = 100;
  spec.steps_per_robot = steps;
  spec.robot_waypoints = {{{0, 0, 1}, {step_length * (steps - 1), 0, 1}}};
  return buildFullMap(generateWorld(spec));
}

}  // namespace

TEST_CASE("merge with an empty map is identity") {
  const VIMap map = squareMap(1);
  const VIMap merged = mergeMaps(map, VIMap());
  CHECK(serializeMapToBytes(merged) == serializeMapToBytes(map));
}

TEST_CASE("merge of two sessions is additive") {
  const VIMap a = squareMap(1);
  const VIMap b = squareMap(2);
  const VIMap merged = mergeMaps(a, b);
  CHECK(merged.missions().size() == 2);
  CHECK(merged.vertices().size() == a.vertices().size() + b.vertices().size());
  CHECK(merged.edges().size() == a.edges().size() + b.edges().size());
  CHECK(merged.landmarks().size() == a.landmarks().size() + b.landmarks().size());
}

TEST_CASE("merge rejects mission id collisions") {
  const VIMap a = squareMap(1);
  CHECK_THROWS_AS(mergeMaps(a, a), std::invalid_argument);
}

TEST_CASE("keyframe with zero thresholds keeps everything") {
  VIMap map = squareMap(3);
  const auto before = serializeMapToBytes(map);
  const KeyframeReport report = keyframeMap(map, {});
  CHECK(report.removed_vertices == 0);
  CHECK(serializeMapToBytes(map) == before);
}

TEST_CASE("keyframe halves a straight constant-speed chain") {
  // 0.25 m per step; a threshold just under twice that drops every other
  // vertex without sitting on the exact rounding boundary.
  VIMap map = straightChain(4, 40, 0.25);
  KeyframeParams params;
  params.min_translation_m = 0.49;
  const std::size_t before = map.vertices().size();
  keyframeMap(map, params);
  const std::size_t after = map.vertices().size();
  CHECK(after >= before / 2 - 1);
  CHECK(after <= before / 2 + 1);
  CHECK(map.checkConsistency().empty());

  // The composed odometry still links the chain end to end.
  const MissionId mission = map.missions().begin()->first;
  const auto chain = map.missionVertexChain(mission);
  int odometry_edges = 0;
  for (const auto& [eid, e] : map.edges()) {
    if (std::holds_alternative<OdometryEdge>(e.payload)) ++odometry_edges;
  }
  CHECK(odometry_edges == static_cast<int>(chain.size()) - 1);
}

TEST_CASE("keyframe retains vertices referenced by loop closures") {
  VIMap map = straightChain(5, 30, 0.2);
  const MissionId mission = map.missions().begin()->first;
  const auto chain = map.missionVertexChain(mission);
  Edge e;
  e.id = IdGenerator(99).next<EdgeId>();
  e.from = chain[9];
  e.to = chain[20];
  LoopClosureEdge lc;
  lc.T_A_B = map.vertex(chain[9]).T_M_I.inverse() * map.vertex(chain[20]).T_M_I;
  lc.covariance = Matrix6d::Identity() * 1e-4;
  e.payload = lc;
  map.addEdge(e);

  KeyframeParams params;
  params.min_translation_m = 1e6;  // would remove all interior vertices
  keyframeMap(map, params);
  CHECK(map.hasVertex(chain[9]));
  CHECK(map.hasVertex(chain[20]));
  CHECK(map.checkConsistency().empty());
}

TEST_CASE("sparsify keep-all is a no-op on Good landmarks") {
  VIMap map = squareMap(6);
  std::size_t good = 0;
  for (const auto& [lid, lm] : map.landmarks()) {
    if (lm.quality == LandmarkQuality::Good) ++good;
  }
  const SparsifyReport report = sparsifyLandmarks(map, 1.0);
  CHECK(report.kept == static_cast<int>(good));
  CHECK(map.landmarks().size() == good);  // Bad ones always go
}

TEST_CASE("sparsify keeps roughly the requested fraction") {
  VIMap map = squareMap(7, 60);
  std::size_t good = 0;
  for (const auto& [lid, lm] : map.landmarks()) {
    if (lm.quality == LandmarkQuality::Good) ++good;
  }
  const SparsifyReport report = sparsifyLandmarks(map, 0.5);
  CHECK(report.kept >= static_cast<int>(good) / 2);
  // Per-vertex floors may push above the plain fraction, but not wildly.
  CHECK(report.kept <= static_cast<int>(good) * 3 / 4);
  CHECK(map.checkConsistency().empty());
}

TEST_CASE("sparsify removes everything when nothing is Good") {
  VIMap map = squareMap(8);
  for (auto& [lid, lm] : map.landmarksMutable()) lm.quality = LandmarkQuality::Bad;
  // Work on a copy of the ids: removal invalidates iteration.
  VIMap copy = map;
  const SparsifyReport report = sparsifyLandmarks(copy, 1.0);
  CHECK(report.kept == 0);
  CHECK(copy.landmarks().empty());
}

TEST_CASE("ape of identical trajectories is zero") {
  Trajectory t;
  for (int i = 0; i < 10; ++i) {
    t.push_back({0.1 * i, Pose6(Eigen::Quaterniond::Identity(), {0.5 * i, 0, 0})});
  }
  const auto result = evaluateApe(t, t, false);
  REQUIRE(result.has_value());
  CHECK(result->rmse == 0.0);
  CHECK(result->associated_pairs == 10);
}

TEST_CASE("ape of a constant offset without alignment") {
  Trajectory gt, est;
  for (int i = 0; i < 10; ++i) {
    gt.push_back({0.1 * i, Pose6(Eigen::Quaterniond::Identity(), {0.5 * i, 0, 0})});
    est.push_back({0.1 * i, Pose6(Eigen::Quaterniond::Identity(), {0.5 * i + 1.0, 0, 0})});
  }
  const auto result = evaluateApe(est, gt, false);
  REQUIRE(result.has_value());
  CHECK(result->rmse == doctest::Approx(1.0));
}

TEST_CASE("alignment removes a rigid offset") {
  Trajectory gt, est;
  const Pose6 offset(so3Exp(Eigen::Vector3d(0, 0, M_PI / 6)), {2, -1, 0.5});
  for (int i = 0; i < 20; ++i) {
    Pose6 p(so3Exp(Eigen::Vector3d(0, 0, 0.05 * i)), {0.3 * i, 0.1 * i * i * 0.02, 0});
    gt.push_back({0.1 * i, p});
    est.push_back({0.1 * i, offset * p});
  }
  const auto result = evaluateApe(est, gt, true);
  REQUIRE(result.has_value());
  CHECK(result->rmse < 1e-9);
}

TEST_CASE("ape needs at least 3 associated pairs") {
  Trajectory gt = {{0.0, {}}, {1.0, {}}};
  Trajectory est = {{0.0, {}}, {5.0, {}}};
  CHECK(!evaluateApe(est, gt, false).has_value());
}

TEST_CASE("ape association respects the 10ms gate") {
  Trajectory gt, est;
  for (int i = 0; i < 10; ++i) {
    gt.push_back({0.1 * i, Pose6()});
    est.push_back({0.1 * i + 0.05, Pose6()});  // 50 ms off: no pairs
  }
  CHECK(!evaluateApe(est, gt, false).has_value());
}

TEST_CASE("tum export format") {
  CHECK(tumLine(0.0, Pose6()) ==
        "0.000000000 0.000000000 0.000000000 0.000000000 0.000000000 0.000000000 0.000000000 "
        "1.000000000");

  const std::string path = std::filesystem::temp_directory_path() / "atlas_tum_test.tum";
  Trajectory t;
  t.push_back({1.5, Pose6(so3Exp(Eigen::Vector3d(0.1, 0.2, 0.3)), {1, 2, 3})});
  t.push_back({2.5, Pose6(so3Exp(Eigen::Vector3d(-0.1, 0, 0.2)), {-1, 0, 4})});
  writeTumFile(t, path);
  const Trajectory back = readTumFile(path);
  REQUIRE(back.size() == t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(back[i].pose.isApprox(t[i].pose, 1e-8));  // format precision
    CHECK(back[i].t == doctest::Approx(t[i].t));
  }
  std::remove(path.c_str());
}

TEST_CASE("per-mission export counts match") {
  WorldSpec spec;
  spec.seed = 12;
  spec.landmark_count = 60;
  spec.steps_per_robot = 15;
  spec.robot_waypoints = {{{-3, 0, 1}, {3, 0, 1}},
                          {{-3, 2, 1}, {3, 2, 1}},
                          {{-3, -2, 1}, {3, -2, 1}}};
  VIMap map = buildFullMap(generateWorld(spec));
  REQUIRE(map.missions().size() == 3);
  for (const auto& [mid, mission] : map.missions()) {
    const Trajectory t = missionTrajectory(map, mid);
    CHECK(t.size() == 15);
  }
}
