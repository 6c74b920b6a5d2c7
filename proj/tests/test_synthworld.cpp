#include <doctest.h>

#include <set>

#include "atlas/console_ops.h"
#include "atlas/loop_closure.h"
#include "atlas/serialization.h"
#include "atlas/solver.h"
#include "atlas/synthworld.h"

using namespace atlas;

namespace {

WorldSpec squareSpec(std::uint64_t seed, int steps, double odo_sigma = 0.0,
                     double pixel_sigma = 0.0) {
  WorldSpec spec;
  spec.seed = seed;
  spec.landmark_count = 200;
  spec.steps_per_robot = steps;
  spec.odometry_sigma_translation = odo_sigma;
  spec.pixel_sigma = pixel_sigma;
  spec.robot_waypoints = {{{-5, -5, 1}, {5, -5, 1}, {5, 5, 1}, {-5, 5, 1}, {-5, -5, 1}}};
  return spec;
}

}  // namespace

TEST_CASE("two waypoints give a straight constant-velocity trajectory") {
  WorldSpec spec;
  spec.seed = 1;
  spec.steps_per_robot = 50;
  spec.robot_waypoints = {{{0, 0, 1}, {10, 0, 1}}};
  const GroundTruthWorld world = generateWorld(spec);
  REQUIRE(world.robots.size() == 1);
  const auto& poses = world.robots[0].T_G_I;
  const Eigen::Vector3d step = poses[1].t - poses[0].t;
  for (std::size_t k = 1; k < poses.size(); ++k) {
    CHECK(((poses[k].t - poses[k - 1].t) - step).norm() < 1e-12);
    CHECK(poses[k].t.y() == 0.0);
  }
}

TEST_CASE("fewer than two waypoints is an error") {
  WorldSpec spec;
  spec.robot_waypoints = {{{0, 0, 0}}};
  CHECK_THROWS_AS(generateWorld(spec), std::invalid_argument);
}

TEST_CASE("same seed produces bit-identical outputs") {
  const WorldSpec spec = squareSpec(42, 60, 0.01, 0.5);
  const GroundTruthWorld w1 = generateWorld(spec);
  const GroundTruthWorld w2 = generateWorld(spec);
  const SimulatedMission s1 = simulateMission(w1, 0);
  const SimulatedMission s2 = simulateMission(w2, 0);
  CHECK(s1.tracks_csv == s2.tracks_csv);
  CHECK(s1.mission_id == s2.mission_id);

  VIMap m1, m2;
  buildMissionMap(m1, w1, s1);
  buildMissionMap(m2, w2, s2);
  CHECK(serializeMapToBytes(m1) == serializeMapToBytes(m2));
}

TEST_CASE("three robots share one landmark field") {
  WorldSpec spec = squareSpec(2, 30);
  spec.robot_waypoints.push_back({{-5, 5, 1}, {5, 5, 1}});
  spec.robot_waypoints.push_back({{5, -5, 1}, {-5, -5, 1}});
  const GroundTruthWorld world = generateWorld(spec);
  CHECK(world.robots.size() == 3);
  VIMap map = buildFullMap(world);
  CHECK(map.missions().size() == 3);
}

TEST_CASE("zero-noise stream is perfectly consistent") {
  const WorldSpec spec = squareSpec(3, 60);
  const GroundTruthWorld world = generateWorld(spec);
  std::vector<SimulatedMission> sims;
  VIMap map = buildFullMap(world, &sims);
  ensureAnchor(map);

  // Odometry integration equals ground truth.
  for (std::size_t k = 0; k < sims[0].vertex_ids.size(); ++k) {
    CHECK(sims[0].odometry_estimate[k].isApprox(sims[0].gt_T_M_I[k], 1e-9));
  }

  SolveOptions options;
  const SolveReport report = solve(map, options);
  CHECK(report.final_cost < 1e-16);
  CHECK(report.iterations <= 1);
}

TEST_CASE("noiseless track triangulation reproduces ground-truth landmarks") {
  const WorldSpec spec = squareSpec(4, 80);
  const GroundTruthWorld world = generateWorld(spec);
  std::vector<SimulatedMission> sims;
  VIMap map = buildFullMap(world, &sims);
  const Pose6 T_M_G = sims[0].T_G_M_true.inverse();

  int checked = 0;
  double worst = 0.0;
  for (const auto& [lid, lm] : map.landmarks()) {
    if (lm.quality != LandmarkQuality::Good) continue;
    // Match against the nearest ground-truth landmark.
    double best = 1e9;
    for (const auto& g : world.landmarks) {
      best = std::min(best, (T_M_G * g - lm.p_M).norm());
    }
    worst = std::max(worst, best);
    ++checked;
  }
  CHECK(checked > 50);
  CHECK(worst < 1e-7);
}

TEST_CASE("odometry noise accumulates into measurable drift") {
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const WorldSpec spec = squareSpec(seed, 200, 0.01);
    const GroundTruthWorld world = generateWorld(spec);
    const SimulatedMission sim = simulateMission(world, 0);
    const double terminal =
        (sim.odometry_estimate.back().t - sim.gt_T_M_I.back().t).norm();
    total += terminal;
    CHECK(terminal > 0.0);
  }
  CHECK(total > 0.01);
}

TEST_CASE("two robots through a shared region see common landmarks") {
  WorldSpec spec;
  spec.seed = 11;
  spec.landmark_count = 300;
  spec.steps_per_robot = 60;
  // Both cross the middle corridor in the same direction.
  spec.robot_waypoints = {{{-8, -1, 1}, {8, -1, 1}}, {{-8, 1, 1}, {8, 1, 1}}};
  const GroundTruthWorld world = generateWorld(spec);
  std::vector<SimulatedMission> sims;
  VIMap map = buildFullMap(world, &sims);

  // Both missions must contain Good landmarks that correspond to the same
  // ground-truth point, which is what makes cross-robot matching possible.
  int shared = 0;
  std::vector<MissionId> missions;
  for (const auto& [mid, m] : map.missions()) missions.push_back(mid);
  REQUIRE(missions.size() == 2);
  for (const auto& g : world.landmarks) {
    bool in0 = false, in1 = false;
    for (const auto& [lid, lm] : map.landmarks()) {
      if (lm.quality != LandmarkQuality::Good) continue;
      const MissionId mid = map.vertex(lm.host).mission;
      const Pose6 T_G_M = mid == missions[0] ? sims[0].T_G_M_true : sims[1].T_G_M_true;
      if ((T_G_M * lm.p_M - g).norm() < 0.01) {
        (mid == missions[0] ? in0 : in1) = true;
      }
    }
    if (in0 && in1) ++shared;
  }
  CHECK(shared >= 50);
}
