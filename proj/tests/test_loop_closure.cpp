#include <doctest.h>

#include <random>

#include "atlas/loop_closure.h"
#include "atlas/solver.h"
#include "atlas/synthworld.h"

using namespace atlas;

namespace {

// Map with landmarks observed from configurable vertex sets (geometry is
// irrelevant for covisibility).
struct CovisFixture {
  VIMap map;
  IdGenerator gen{88};
  MissionId mission;
  CameraId camera;

  CovisFixture() {
    Mission m;
    m.id = gen.next<MissionId>();
    mission = map.addMission(m);
    CameraConfig cam;
    cam.camera_id = gen.next<CameraId>();
    cam.fx = cam.fy = 100;
    camera = cam.camera_id;
    map.setCamera(cam);
    FeatureTypeConfig ft;
    ft.feature_type_id = 0;
    ft.descriptor_size = 64;
    map.setFeatureType(ft);
  }

  VertexId addVertex(int n_keypoints) {
    Vertex v;
    v.id = gen.next<VertexId>();
    v.mission = mission;
    v.timestamp_ns = static_cast<std::int64_t>(map.vertices().size()) * 100;
    VisualFrame frame;
    frame.camera = camera;
    frame.keypoints.resize(n_keypoints);
    for (auto& kp : frame.keypoints) kp.descriptor.assign(8, 0);
    v.frames.push_back(frame);
    return map.addVertex(v);
  }

  LandmarkId addLandmarkObservedBy(const std::vector<std::pair<VertexId, int>>& refs) {
    Landmark lm;
    lm.id = gen.next<LandmarkId>();
    lm.host = refs.front().first;
    for (const auto& [vid, k] : refs) {
      lm.observations.push_back({vid, 0, static_cast<std::uint32_t>(k)});
    }
    return map.addLandmark(lm);
  }
};

}  // namespace

TEST_CASE("covisibility keeps a cluster sharing one vertex") {
  CovisFixture f;
  const VertexId common = f.addVertex(5);
  std::vector<CandidateMatch> candidates;
  for (int i = 0; i < 5; ++i) {
    const LandmarkId lm = f.addLandmarkObservedBy({{common, i}});
    candidates.push_back({{common, 0, static_cast<std::uint32_t>(i)}, lm, 1.0});
  }
  const auto kept = covisibilityFilter(f.map, candidates, 3);
  CHECK(kept.size() == 5);
}

TEST_CASE("covisibility drops mutually unseen matches") {
  CovisFixture f;
  std::vector<CandidateMatch> candidates;
  for (int i = 0; i < 5; ++i) {
    const VertexId v = f.addVertex(1);
    const LandmarkId lm = f.addLandmarkObservedBy({{v, 0}});
    candidates.push_back({{v, 0, 0}, lm, 1.0});
  }
  CHECK(covisibilityFilter(f.map, candidates, 2).empty());
}

TEST_CASE("covisibility separates inliers from scattered outliers") {
  CovisFixture f;
  // 10 inlier landmarks share two observing vertices; 10 outliers each live
  // on their own isolated vertex.
  const VertexId shared_a = f.addVertex(10);
  const VertexId shared_b = f.addVertex(10);
  std::vector<CandidateMatch> candidates;
  std::set<LandmarkId> inliers;
  for (int i = 0; i < 10; ++i) {
    const LandmarkId lm = f.addLandmarkObservedBy({{shared_a, i}, {shared_b, i}});
    inliers.insert(lm);
    candidates.push_back({{shared_a, 0, static_cast<std::uint32_t>(i)}, lm, 1.0});
  }
  for (int i = 0; i < 10; ++i) {
    const VertexId isolated = f.addVertex(1);
    const LandmarkId lm = f.addLandmarkObservedBy({{isolated, 0}});
    candidates.push_back({{isolated, 0, 0}, lm, 1.0});
  }
  const auto kept = covisibilityFilter(f.map, candidates, 3);
  CHECK(kept.size() == 10);
  for (const auto& c : kept) CHECK(inliers.count(c.landmark) == 1);
}

TEST_CASE("commit edge mode inserts once and skips duplicates") {
  CovisFixture f;
  const VertexId a = f.addVertex(1);
  const VertexId b = f.addVertex(1);
  LoopClosureResult result;
  result.vertex_a = a;
  result.vertex_b = b;
  result.mission_a = result.mission_b = f.mission;
  result.T_A_B.t = Eigen::Vector3d(1, 0, 0);
  result.covariance = Matrix6d::Identity() * 0.01;

  const CommitReport first = commitLoopClosure(f.map, result, CommitMode::Edge);
  CHECK(first.edges_added == 1);
  CHECK(f.map.edges().size() == 1);
  const auto& lc = std::get<LoopClosureEdge>(f.map.edges().begin()->second.payload);
  CHECK(lc.switch_value == 1.0);

  const CommitReport again = commitLoopClosure(f.map, result, CommitMode::Edge);
  CHECK(again.edges_added == 0);
  CHECK(again.duplicates_skipped == 1);
  CHECK(f.map.edges().size() == 1);

  // Same pair, different method: a separate edge.
  result.method = LoopClosureMethod::Icp;
  const CommitReport icp = commitLoopClosure(f.map, result, CommitMode::Edge);
  CHECK(icp.edges_added == 1);
  CHECK(f.map.edges().size() == 2);
}

TEST_CASE("commit merge mode unions landmark observations") {
  CovisFixture f;
  const VertexId a = f.addVertex(3);
  const VertexId b = f.addVertex(2);
  const LandmarkId lm_a = f.addLandmarkObservedBy({{a, 0}, {a, 1}, {a, 2}});
  const LandmarkId lm_b = f.addLandmarkObservedBy({{b, 0}, {b, 1}});

  LoopClosureResult result;
  result.merge_pairs = {{lm_a, lm_b}};
  const CommitReport report = commitLoopClosure(f.map, result, CommitMode::Merge);
  CHECK(report.landmarks_merged == 1);
  CHECK(f.map.landmarks().size() == 1);
  const LandmarkId survivor = std::min(lm_a, lm_b);
  CHECK(f.map.landmark(survivor).observations.size() == 5);
  CHECK(f.map.checkConsistency().empty());
}

TEST_CASE("detect finds revisit closures on a synthetic loop") {
  WorldSpec spec;
  spec.seed = 21;
  spec.landmark_count = 300;
  spec.steps_per_robot = 120;
  spec.odometry_sigma_translation = 0.005;
  spec.pixel_sigma = 0.2;
  spec.robot_waypoints = {{{-6, -6, 1}, {6, -6, 1}, {6, 6, 1}, {-6, 6, 1}, {-6, -6, 1}}};
  const GroundTruthWorld world = generateWorld(spec);
  VIMap map = buildFullMap(world);
  ensureAnchor(map);

  LoopClosureOptions options;
  options.ransac.seed = 77;
  const auto results = detectLoopClosures(map, options);
  CHECK(results.size() > 0);
  for (const auto& r : results) {
    CHECK(r.inlier_ratio > 0.0);
    CHECK(r.inlier_matches.size() >= 6);
    // Revisit closures span a real time gap.
    const auto dt = std::abs(map.vertex(r.vertex_a).timestamp_ns -
                             map.vertex(r.vertex_b).timestamp_ns);
    CHECK(dt >= options.min_time_gap_ns);
  }

  const LoopClosureReport report = runLoopClosure(map, options);
  CHECK(report.commit.edges_added > 0);
  CHECK(map.checkConsistency().empty());
}

TEST_CASE("merge mode commits reduce duplicate landmarks") {
  WorldSpec spec;
  spec.seed = 33;
  spec.landmark_count = 200;
  spec.steps_per_robot = 100;
  spec.odometry_sigma_translation = 0.002;
  spec.robot_waypoints = {{{-5, -5, 1}, {5, -5, 1}, {5, 5, 1}, {-5, 5, 1}, {-5, -5, 1}}};
  const GroundTruthWorld world = generateWorld(spec);
  VIMap map = buildFullMap(world);
  ensureAnchor(map);

  const std::size_t before = map.landmarks().size();
  LoopClosureOptions options;
  options.ransac.seed = 5;
  options.mode = CommitMode::Merge;
  const LoopClosureReport report = runLoopClosure(map, options);
  CHECK(report.commit.landmarks_merged > 0);
  CHECK(map.landmarks().size() == before - report.commit.landmarks_merged);
  CHECK(map.checkConsistency().empty());
}
