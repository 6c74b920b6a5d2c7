#include <doctest.h>

#include <random>

#include "atlas/imu_preintegration.h"
#include "atlas/residuals.h"
#include "atlas/solver.h"

using namespace atlas;

namespace {

Pose6 randomPose(std::mt19937_64& rng, double rot = 0.5, double trans = 2.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  Pose6 p;
  p.q = so3Exp(rot * Eigen::Vector3d(n(rng), n(rng), n(rng)));
  p.t = trans * Eigen::Vector3d(n(rng), n(rng), n(rng));
  p.normalize();
  return p;
}

Matrix6d randomSpd6(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix6d a;
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) a(r, c) = n(rng);
  return a * a.transpose() + 0.5 * Matrix6d::Identity();
}

// Two poses, two missions with baseframes, one landmark, velocities, biases,
// one switch: enough state for any block kind.
ProblemState makeRichState(std::mt19937_64& rng) {
  ProblemState s;
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 2; ++i) {
    s.poses.push_back(randomPose(rng));
    s.velocities.emplace_back(n(rng), n(rng), n(rng));
    s.gyro_biases.push_back(0.01 * Eigen::Vector3d(n(rng), n(rng), n(rng)));
    s.accel_biases.push_back(0.05 * Eigen::Vector3d(n(rng), n(rng), n(rng)));
    s.baseframes.push_back(randomPose(rng, 0.3, 3.0));
  }
  // Keep the landmark in front of both cameras.
  s.points.push_back(Eigen::Vector3d(n(rng), n(rng), 8.0 + std::abs(n(rng))));
  s.switches.push_back(0.3 + 0.4 * std::uniform_real_distribution<double>(0, 1)(rng));

  int offset = 0;
  auto assign = [&offset](std::vector<int>& v, int count, int size) {
    for (int i = 0; i < count; ++i) {
      v.push_back(offset);
      offset += size;
    }
  };
  assign(s.pose_offset, 2, 6);
  assign(s.velocity_offset, 2, 3);
  assign(s.gyro_bias_offset, 2, 3);
  assign(s.accel_bias_offset, 2, 3);
  assign(s.baseframe_offset, 2, 6);
  assign(s.point_offset, 1, 3);
  assign(s.switch_offset, 1, 1);
  s.dimension = offset;
  return s;
}

ResidualBlock makeBlock(ResidualKind kind, std::mt19937_64& rng, const ProblemState& state) {
  ResidualBlock b;
  b.kind = kind;
  std::normal_distribution<double> n(0.0, 1.0);
  switch (kind) {
    case ResidualKind::RelPose: {
      b.pose_a = 0;
      b.pose_b = 1;
      b.baseframe_a = 0;
      b.baseframe_b = 1;
      b.switch_index = 0;
      b.T_meas = randomPose(rng);
      b.sqrt_info6 = Eigen::LLT<Matrix6d>(randomSpd6(rng)).matrixL().transpose();
      break;
    }
    case ResidualKind::Absolute: {
      b.pose_a = 0;
      b.baseframe_a = 0;
      b.T_meas = randomPose(rng);
      b.sqrt_info6 = Eigen::LLT<Matrix6d>(randomSpd6(rng)).matrixL().transpose();
      break;
    }
    case ResidualKind::ImuPreint: {
      b.pose_a = 0;
      b.pose_b = 1;
      b.vel_a = 0;
      b.vel_b = 1;
      b.delta_q = randomPose(rng).q;
      b.delta_v = Eigen::Vector3d(n(rng), n(rng), n(rng));
      b.delta_p = Eigen::Vector3d(n(rng), n(rng), n(rng));
      b.delta_t = 0.5 + std::abs(n(rng));
      Eigen::Matrix<double, 9, 9> a;
      for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 9; ++c) a(r, c) = n(rng);
      const Matrix9d spd = a * a.transpose() + 0.5 * Matrix9d::Identity();
      b.sqrt_info9 = Eigen::LLT<Matrix9d>(spd).matrixL().transpose();
      break;
    }
    case ResidualKind::Reprojection: {
      b.pose_a = 0;
      b.point = 0;
      b.baseframe_a = 0;
      b.baseframe_b = 1;
      b.T_C_I = randomPose(rng, 0.2, 0.1);
      b.fx = 400;
      b.fy = 410;
      b.cx = 320;
      b.cy = 240;
      b.uv = {320 + 50 * n(rng), 240 + 50 * n(rng)};
      b.inv_sigma = 1.0;
      break;
    }
    case ResidualKind::Landmark3D: {
      b.pose_a = 0;
      b.point = 0;
      b.baseframe_a = 0;
      b.baseframe_b = 1;
      b.T_C_I = randomPose(rng, 0.2, 0.1);
      b.p_C_observed = Eigen::Vector3d(n(rng), n(rng), 5.0 + std::abs(n(rng)));
      b.inv_sigma = 20.0;
      break;
    }
    case ResidualKind::SwitchPrior: {
      b.switch_index = 0;
      b.inv_sigma_switch = 10.0;
      break;
    }
    case ResidualKind::BiasWalk: {
      b.bias_g_a = 0;
      b.bias_g_b = 1;
      b.bias_a_a = 0;
      b.bias_a_b = 1;
      b.inv_sigma_walk_gyro = 1e3;
      b.inv_sigma_walk_accel = 1e2;
      break;
    }
  }
  return b;
}

// A landmark behind a camera invalidates Reprojection/Landmark3D blocks;
// retry until the configuration is usable.
bool blockUsable(const ResidualBlock& b, const ProblemState& s) {
  const BlockEval eval = evaluateResidualBlock(b, s, false, 0.0);
  return eval.valid;
}

}  // namespace

TEST_CASE("analytic jacobians match finite differences for every kind") {
  const ResidualKind kinds[] = {ResidualKind::RelPose,    ResidualKind::ImuPreint,
                                ResidualKind::Reprojection, ResidualKind::Landmark3D,
                                ResidualKind::Absolute,   ResidualKind::SwitchPrior,
                                ResidualKind::BiasWalk};
  std::mt19937_64 rng(2024);
  for (const ResidualKind kind : kinds) {
    CAPTURE(residualKindName(kind));
    int checked = 0;
    while (checked < 100) {
      const ProblemState state = makeRichState(rng);
      const ResidualBlock block = makeBlock(kind, rng, state);
      if (!blockUsable(block, state)) continue;
      const double err = jacobianRelativeError(block, state);
      CHECK(err < 1e-5);
      ++checked;
    }
  }
}

TEST_CASE("relpose residual zero for consistent states") {
  std::mt19937_64 rng(5);
  ProblemState s = makeRichState(rng);
  ResidualBlock b;
  b.kind = ResidualKind::RelPose;
  b.pose_a = 0;
  b.pose_b = 1;
  b.T_meas = s.poses[0].inverse() * s.poses[1];
  const BlockEval eval = evaluateResidualBlock(b, s, false, 0.0);
  CHECK(eval.residual.head<6>().norm() < 1e-12);
}

TEST_CASE("switch prior closed form") {
  std::mt19937_64 rng(6);
  ProblemState s = makeRichState(rng);
  ResidualBlock b;
  b.kind = ResidualKind::SwitchPrior;
  b.switch_index = 0;
  b.inv_sigma_switch = 10.0;
  s.switches[0] = 1.0;
  CHECK(evaluateResidualBlock(b, s, false, 0.0).residual(0) == 0.0);
  s.switches[0] = 0.0;
  CHECK(evaluateResidualBlock(b, s, false, 0.0).residual(0) == doctest::Approx(10.0));
}

TEST_CASE("reprojection residual zero at observed pixel") {
  std::mt19937_64 rng(7);
  ProblemState s = makeRichState(rng);
  ResidualBlock b = makeBlock(ResidualKind::Reprojection, rng, s);
  b.baseframe_a = b.baseframe_b = -1;
  // Project the state's landmark and use that pixel as the measurement.
  const Eigen::Vector3d p_C = b.T_C_I * (s.poses[0].inverse() * s.points[0]);
  REQUIRE(p_C.z() > 0);
  b.uv = {b.fx * p_C.x() / p_C.z() + b.cx, b.fy * p_C.y() / p_C.z() + b.cy};
  const BlockEval eval = evaluateResidualBlock(b, s, false, 0.0);
  CHECK(eval.residual.head<2>().norm() < 1e-12);
}

TEST_CASE("imu preintegration of zero rates") {
  std::vector<ImuSample> samples;
  for (int i = 0; i <= 10; ++i) {
    samples.push_back({0.1 * i, Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()});
  }
  const ImuEdge edge =
      preintegrateImu(samples, Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero());
  CHECK(so3Log(edge.delta_q).norm() < 1e-12);
  CHECK(edge.delta_v.norm() < 1e-12);
  CHECK(edge.delta_p.norm() < 1e-12);
  CHECK(edge.delta_t == doctest::Approx(1.0));
}

TEST_CASE("imu preintegration of constant rotation rate") {
  std::vector<ImuSample> samples;
  const Eigen::Vector3d omega(0, 0, M_PI / 2);
  for (int i = 0; i <= 100; ++i) {
    samples.push_back({0.01 * i, omega, Eigen::Vector3d::Zero()});
  }
  const ImuEdge edge =
      preintegrateImu(samples, Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero());
  const Eigen::Quaterniond expected = so3Exp(omega);
  CHECK(so3Log(expected.conjugate() * edge.delta_q).norm() < 1e-6);
}

TEST_CASE("imu preintegration of constant acceleration") {
  std::vector<ImuSample> samples;
  const Eigen::Vector3d accel(1, 0, 0);
  for (int i = 0; i <= 100; ++i) {
    samples.push_back({0.01 * i, Eigen::Vector3d::Zero(), accel});
  }
  const ImuEdge edge =
      preintegrateImu(samples, Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero());
  CHECK((edge.delta_v - Eigen::Vector3d(1, 0, 0)).norm() < 1e-9);
  CHECK((edge.delta_p - Eigen::Vector3d(0.5, 0, 0)).norm() < 1e-9);
}

TEST_CASE("imu preintegration rejects bad input") {
  std::vector<ImuSample> one = {{0.0, {}, {}}};
  CHECK_THROWS_AS(preintegrateImu(one, {}, {}), std::invalid_argument);
  std::vector<ImuSample> regress = {{0.0, {}, {}}, {0.0, {}, {}}};
  CHECK_THROWS_AS(preintegrateImu(regress, {}, {}), std::invalid_argument);
}

namespace {

// Small single-mission chain with odometry; optionally noisy poses and a
// loop-closure edge between first and last vertex.
struct ChainFixture {
  VIMap map;
  IdGenerator gen{77};
  MissionId mission;
  std::vector<VertexId> vertices;
  std::vector<Pose6> gt;

  explicit ChainFixture(int n, double odo_sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, odo_sigma);
    Mission m;
    m.id = gen.next<MissionId>();
    m.baseframe_known = true;
    mission = map.addMission(m);

    Pose6 pose;  // ground truth
    Pose6 estimate;
    for (int i = 0; i < n; ++i) {
      gt.push_back(pose);
      Vertex v;
      v.id = gen.next<VertexId>();
      v.mission = mission;
      v.timestamp_ns = i * 100000000LL;
      v.T_M_I = estimate;
      vertices.push_back(map.addVertex(v));

      Pose6 step;
      step.q = so3Exp(Eigen::Vector3d(0, 0, 2.0 * M_PI / n));
      step.t = Eigen::Vector3d(0.2, 0, 0);
      if (i + 1 < n) {
        Pose6 measured = step;
        measured.t += Eigen::Vector3d(noise(rng), noise(rng), noise(rng));
        Edge e;
        e.id = gen.next<EdgeId>();
        e.from = vertices[i];
        e.to = {};  // filled after the next vertex exists
        OdometryEdge odo;
        odo.T_A_B = measured;
        odo.covariance = Matrix6d::Identity() * 1e-4;
        e.payload = odo;
        pending.push_back(e);
        pose = pose * step;
        estimate = estimate * measured;
      }
    }
    for (std::size_t i = 0; i < pending.size(); ++i) {
      pending[i].to = vertices[i + 1];
      map.addEdge(pending[i]);
    }
  }

  void addLoopClosure(int a, int b, double switch_prior_var = 0.01,
                      const Pose6& offset = Pose6::identity()) {
    Edge e;
    e.id = gen.next<EdgeId>();
    e.from = vertices[a];
    e.to = vertices[b];
    LoopClosureEdge lc;
    lc.T_A_B = (gt[a].inverse() * gt[b]) * offset;
    lc.covariance = Matrix6d::Identity() * 1e-4;
    lc.switch_prior_var = switch_prior_var;
    e.payload = lc;
    map.addEdge(e);
  }

  [[nodiscard]] double rmse() const {
    double sum = 0;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      sum += (map.vertex(vertices[i]).T_M_I.t - gt[i].t).squaredNorm();
    }
    return std::sqrt(sum / vertices.size());
  }

 private:
  std::vector<Edge> pending;
};

}  // namespace

TEST_CASE("noiseless chain is a fixed point") {
  ChainFixture f(20, 0.0, 1);
  SolveOptions options;
  const SolveReport report = solve(f.map, options);
  CHECK(report.iterations <= 1);
  CHECK(report.final_cost < 1e-16);
}

TEST_CASE("loop closures correct odometry drift") {
  ChainFixture f(60, 0.01, 2);
  const double before = f.rmse();
  f.addLoopClosure(0, 59);
  f.addLoopClosure(10, 50);
  f.addLoopClosure(5, 55);
  SolveOptions options;
  const SolveReport report = solve(f.map, options);
  CHECK(report.final_cost <= report.initial_cost);
  CHECK(f.rmse() < before);
}

TEST_CASE("switchable constraints disable gross outliers") {
  ChainFixture f(40, 0.005, 3);
  f.addLoopClosure(0, 39);
  f.addLoopClosure(8, 30);
  Pose6 gross;
  gross.t = Eigen::Vector3d(5, -3, 2);
  gross.q = so3Exp(Eigen::Vector3d(0.5, 0.5, 0));
  f.addLoopClosure(3, 25, 0.01, gross);

  SolveOptions options;
  options.max_iterations = 100;
  solve(f.map, options);

  std::vector<double> switches;
  for (const auto& [eid, e] : f.map.edges()) {
    if (const auto* lc = std::get_if<LoopClosureEdge>(&e.payload)) {
      switches.push_back(lc->switch_value);
    }
  }
  REQUIRE(switches.size() == 3);
  std::sort(switches.begin(), switches.end());
  CHECK(switches[0] < 0.1);   // the planted outlier
  CHECK(switches[1] > 0.9);   // both genuine closures stay on
  CHECK(switches[2] > 0.9);
}

TEST_CASE("gauge invariance of the final cost") {
  ChainFixture f(30, 0.01, 4);
  f.addLoopClosure(0, 29);
  VIMap transformed = f.map;
  Pose6 shift;
  shift.q = so3Exp(Eigen::Vector3d(0, 0, 1.2));
  shift.t = Eigen::Vector3d(10, -5, 2);
  for (const auto& [vid, v] : transformed.vertices()) {
    transformed.vertex(vid).T_M_I = shift * v.T_M_I;
  }

  SolveOptions options;
  const SolveReport a = solve(f.map, options);
  const SolveReport b = solve(transformed, options);
  CHECK(std::abs(a.final_cost - b.final_cost) <=
        1e-8 * std::max({a.final_cost, b.final_cost, 1e-12}));

  // Relative pose estimates agree.
  const Pose6 rel_a = f.map.vertex(f.vertices[5]).T_M_I.inverse() *
                      f.map.vertex(f.vertices[25]).T_M_I;
  const Pose6 rel_b = transformed.vertex(f.vertices[5]).T_M_I.inverse() *
                      transformed.vertex(f.vertices[25]).T_M_I;
  CHECK(rel_a.isApprox(rel_b, 1e-6));
}

TEST_CASE("solver is deterministic") {
  auto run = [] {
    ChainFixture f(30, 0.01, 9);
    f.addLoopClosure(0, 29);
    SolveOptions options;
    solve(f.map, options);
    std::vector<double> values;
    for (const auto& [vid, v] : f.map.vertices()) {
      values.push_back(v.T_M_I.t.x());
      values.push_back(v.T_M_I.q.w());
    }
    return values;
  };
  CHECK(run() == run());
}

TEST_CASE("sparse and dense paths agree") {
  ChainFixture dense_fixture(25, 0.01, 11);
  dense_fixture.addLoopClosure(0, 24);
  ChainFixture sparse_fixture(25, 0.01, 11);
  sparse_fixture.addLoopClosure(0, 24);

  SolveOptions dense_opts;
  dense_opts.sparse_state_threshold = 1 << 20;
  SolveOptions sparse_opts;
  sparse_opts.sparse_state_threshold = 0;

  const SolveReport rd = solve(dense_fixture.map, dense_opts);
  const SolveReport rs = solve(sparse_fixture.map, sparse_opts);
  CHECK(std::abs(rd.final_cost - rs.final_cost) <=
        1e-9 * std::max(1.0, std::max(rd.final_cost, rs.final_cost)));
}

TEST_CASE("unconstrained state reported as rank deficient") {
  VIMap map;
  IdGenerator gen(13);
  Mission m;
  m.id = gen.next<MissionId>();
  m.baseframe_known = true;
  map.addMission(m);
  // Two vertices, only one edge chain vertex pair; a third dangling vertex
  // with no constraints at all.
  Vertex a, b, c;
  a.id = gen.next<VertexId>();
  a.mission = m.id;
  a.timestamp_ns = 0;
  b.id = gen.next<VertexId>();
  b.mission = m.id;
  b.timestamp_ns = 1;
  c.id = gen.next<VertexId>();
  c.mission = m.id;
  c.timestamp_ns = 2;
  map.addVertex(a);
  map.addVertex(b);
  map.addVertex(c);
  Edge e;
  e.id = gen.next<EdgeId>();
  e.from = a.id;
  e.to = b.id;
  e.payload = OdometryEdge{};
  map.addEdge(e);
  // Vertex c is silently excluded (no residual touches it), so the solve
  // succeeds; the report must not claim it optimized the dangling state.
  const SolveReport report = solve(map, {});
  CHECK(report.termination != SolveReport::Termination::RankDeficient);
  CHECK(report.state_dimension == 6);
}
