#include <doctest.h>

#include <random>

#include "atlas/horn.h"
#include "atlas/p3p.h"
#include "atlas/ransac.h"
#include "atlas/triangulation.h"

using namespace atlas;

namespace {

Pose6 makePose(const Eigen::Vector3d& rot, const Eigen::Vector3d& t) {
  Pose6 p;
  p.q = so3Exp(rot);
  p.t = t;
  p.normalize();
  return p;
}

// Camera at position `t` looking down +z of its own frame after rotation.
ObservationGeometry observe(const Pose6& T_M_C, const Eigen::Vector3d& point_M, double fx = 400,
                            double fy = 400, double cx = 320, double cy = 240) {
  ObservationGeometry o;
  o.T_M_C = T_M_C;
  o.fx = fx;
  o.fy = fy;
  o.cx = cx;
  o.cy = cy;
  const Eigen::Vector3d p_C = T_M_C.inverse() * point_M;
  o.uv = projectToPixel(p_C, fx, fy, cx, cy);
  o.depth = p_C.z();
  return o;
}

}  // namespace

TEST_CASE("triangulation of two noiseless views") {
  const Eigen::Vector3d target(0, 0, 5);
  std::vector<ObservationGeometry> obs;
  obs.push_back(observe(makePose({0, 0, 0}, {0.5, 0, 0}), target));
  obs.push_back(observe(makePose({0, 0, 0}, {-0.5, 0, 0}), target));
  const auto result = triangulateLandmark(obs);
  REQUIRE(result.ok());
  CHECK((result.position - target).norm() < 1e-9);
}

TEST_CASE("triangulation with identical poses fails") {
  const Eigen::Vector3d target(0, 0, 5);
  std::vector<ObservationGeometry> obs;
  obs.push_back(observe(Pose6::identity(), target));
  obs.push_back(observe(Pose6::identity(), target));
  const auto result = triangulateLandmark(obs);
  CHECK(result.status == TriangulationStatus::InsufficientParallax);
}

TEST_CASE("triangulation of many random points from many views") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Pose6> cameras;
  for (int i = 0; i < 10; ++i) {
    cameras.push_back(makePose({0.05 * u(rng), 0.05 * u(rng), 0.05 * u(rng)},
                               {2.0 * u(rng), 2.0 * u(rng), 0.2 * u(rng)}));
  }
  double max_err = 0.0;
  for (int p = 0; p < 100; ++p) {
    const Eigen::Vector3d target(3.0 * u(rng), 3.0 * u(rng), 8.0 + 2.0 * u(rng));
    std::vector<ObservationGeometry> obs;
    for (const auto& cam : cameras) obs.push_back(observe(cam, target));
    const auto result = triangulateLandmark(obs);
    REQUIRE(result.ok());
    max_err = std::max(max_err, (result.position - target).norm());
  }
  CHECK(max_err < 1e-7);
}

TEST_CASE("triangulation equivariance under rigid transform") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Eigen::Vector3d target(0.5, -0.3, 6.0);
  std::vector<ObservationGeometry> obs;
  obs.push_back(observe(makePose({0, 0.02, 0}, {0.7, 0, 0}), target));
  obs.push_back(observe(makePose({0.01, 0, 0}, {-0.7, 0.1, 0}), target));
  obs.push_back(observe(makePose({0, 0, 0.03}, {0.1, -0.6, 0.2}), target));

  const Pose6 world_shift = makePose({0.4, -0.2, 0.9}, {10, -4, 2});
  std::vector<ObservationGeometry> moved = obs;
  for (auto& o : moved) o.T_M_C = world_shift * o.T_M_C;

  const auto r1 = triangulateLandmark(obs);
  const auto r2 = triangulateLandmark(moved);
  REQUIRE(r1.ok());
  REQUIRE(r2.ok());
  CHECK((r2.position - world_shift * r1.position).norm() < 1e-8);
}

TEST_CASE("3d initialization averages back-projections") {
  // One observation at depth 2 on the optical axis.
  ObservationGeometry o;
  o.uv = {320, 240};
  o.fx = o.fy = 400;
  o.cx = 320;
  o.cy = 240;
  o.depth = 2.0;
  std::vector<ObservationGeometry> obs = {o};
  auto result = initializeLandmark3d(obs);
  REQUIRE(result.ok());
  CHECK((result.position - Eigen::Vector3d(0, 0, 2)).norm() < 1e-12);

  // Two observations back-projecting to (1,0,0) and (3,0,0) average to (2,0,0).
  ObservationGeometry a, b;
  a.fx = a.fy = 400;
  a.cx = 320;
  a.cy = 240;
  a.uv = {320, 240};
  a.depth = 1.0;
  a.T_M_C = makePose({0, M_PI / 2, 0}, {0, 0, 0});  // optical axis along mission +x
  b = a;
  b.depth = 3.0;
  std::vector<ObservationGeometry> obs2 = {a, b};
  result = initializeLandmark3d(obs2);
  REQUIRE(result.ok());
  CHECK((result.position - Eigen::Vector3d(2, 0, 0)).norm() < 1e-12);
}

TEST_CASE("3d initialization without depth errors") {
  ObservationGeometry o;
  o.depth = -1.0;
  std::vector<ObservationGeometry> obs = {o};
  CHECK(initializeLandmark3d(obs).status == TriangulationStatus::NoDepth);
}

TEST_CASE("3d initialization is order independent") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 0.01);
  std::vector<ObservationGeometry> obs;
  for (int i = 0; i < 50; ++i) {
    ObservationGeometry o;
    o.fx = o.fy = 400;
    o.cx = 320;
    o.cy = 240;
    o.uv = {320 + n(rng) * 400, 240 + n(rng) * 400};
    o.depth = 2.0 + n(rng);
    o.T_M_C = makePose({n(rng), n(rng), n(rng)}, {n(rng), n(rng), n(rng)});
    obs.push_back(o);
  }
  const auto forward = initializeLandmark3d(obs);
  std::reverse(obs.begin(), obs.end());
  const auto backward = initializeLandmark3d(obs);
  REQUIRE(forward.ok());
  CHECK(forward.position == backward.position);  // exact, via sorted summation
}

TEST_CASE("horn alignment identity") {
  std::vector<Eigen::Vector3d> pts;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 10; ++i) pts.emplace_back(u(rng), u(rng), u(rng));
  const auto result = hornAlign(pts, pts);
  REQUIRE(!result.degenerate);
  CHECK(result.T_B_A.isApprox(Pose6::identity(), 1e-12));
  CHECK(result.rms < 1e-12);
}

TEST_CASE("horn alignment recovers a planted transform") {
  const Pose6 planted = makePose({0, 0, M_PI / 2}, {1, 2, 3});
  std::vector<Eigen::Vector3d> a, b;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 10; ++i) {
    a.emplace_back(u(rng), u(rng), u(rng));
    b.push_back(planted * a.back());
  }
  const auto result = hornAlign(a, b);
  REQUIRE(!result.degenerate);
  CHECK(rotationDistance(result.T_B_A, planted) < 1e-10);
  CHECK((result.T_B_A.t - planted.t).norm() < 1e-10);
  CHECK(result.rms < 1e-10);
}

TEST_CASE("horn left-invariance property") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Eigen::Vector3d> a;
    for (int i = 0; i < 6; ++i) a.emplace_back(n(rng), n(rng), n(rng));
    const Pose6 t = makePose({n(rng) * 0.3, n(rng) * 0.3, n(rng) * 0.3}, {n(rng), n(rng), n(rng)});
    std::vector<Eigen::Vector3d> b;
    for (const auto& p : a) b.push_back(t * p);
    const auto result = hornAlign(a, b);
    REQUIRE(!result.degenerate);
    CHECK(rotationDistance(result.T_B_A, t) < 1e-10);
    CHECK((result.T_B_A.t - t.t).norm() < 1e-9);
  }
}

TEST_CASE("horn degenerate on collinear points") {
  std::vector<Eigen::Vector3d> a = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  std::vector<Eigen::Vector3d> b = a;
  CHECK(hornAlign(a, b).degenerate);
}

TEST_CASE("horn works on three non-collinear points") {
  // Minimal RANSAC samples are triples; planar rank-2 scatter must be fine.
  std::vector<Eigen::Vector3d> a = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  const Pose6 t = makePose({0.1, -0.2, 0.3}, {4, 5, 6});
  std::vector<Eigen::Vector3d> b;
  for (const auto& p : a) b.push_back(t * p);
  const auto result = hornAlign(a, b);
  REQUIRE(!result.degenerate);
  CHECK(rotationDistance(result.T_B_A, t) < 1e-10);
}

TEST_CASE("p3p minimal solver recovers a known camera") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int recovered = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Pose6 T_W_C = makePose({0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng)},
                                 {2 * u(rng), 2 * u(rng), 2 * u(rng)});
    Eigen::Vector3d points[3];
    Eigen::Vector3d bearings[3];
    bool valid = true;
    for (int i = 0; i < 3; ++i) {
      points[i] = Eigen::Vector3d(3 * u(rng), 3 * u(rng), 6.0 + 2 * u(rng));
      const Eigen::Vector3d p_C = T_W_C.inverse() * points[i];
      if (p_C.z() < 0.1) valid = false;
      bearings[i] = p_C.normalized();
    }
    if (!valid) {
      --trial;
      continue;
    }
    const auto solutions = solveP3p(bearings, points);
    for (const auto& s : solutions) {
      if (rotationDistance(s, T_W_C) < 1e-6 && (s.t - T_W_C.t).norm() < 1e-6) {
        ++recovered;
        break;
      }
    }
  }
  CHECK(recovered == 100);
}

TEST_CASE("p3p rejects collinear points") {
  Eigen::Vector3d points[3] = {{0, 0, 5}, {1, 0, 5}, {2, 0, 5}};
  Eigen::Vector3d bearings[3];
  for (int i = 0; i < 3; ++i) bearings[i] = points[i].normalized();
  CHECK(solveP3p(bearings, points).empty());
}

TEST_CASE("ransac p3p on noiseless projections") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Pose6 T_W_C = makePose({0.1, -0.2, 0.15}, {0.5, 0.3, -0.2});
  PinholeIntrinsics cam{400, 400, 320, 240};
  std::vector<Correspondence2D3D> matches;
  for (int i = 0; i < 20; ++i) {
    Correspondence2D3D m;
    m.point = Eigen::Vector3d(3 * u(rng), 3 * u(rng), 7.0 + 2 * u(rng));
    const Eigen::Vector3d p_C = T_W_C.inverse() * m.point;
    m.uv = projectToPixel(p_C, cam.fx, cam.fy, cam.cx, cam.cy);
    matches.push_back(m);
  }
  RansacOptions opts;
  opts.seed = 42;
  const auto result = ransacP3p(matches, cam, 2.0, opts);
  REQUIRE(result.has_value());
  CHECK(result->inliers.size() == 20);
  CHECK(rotationDistance(result->transform, T_W_C) < 1e-6);
  CHECK((result->transform.t - T_W_C.t).norm() < 1e-6);
}

TEST_CASE("ransac p3p separates inliers from uniform outliers") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> upix(0, 640);
  const Pose6 T_W_C = makePose({0.05, 0.1, -0.07}, {1.0, -0.5, 0.25});
  PinholeIntrinsics cam{400, 400, 320, 240};
  std::vector<Correspondence2D3D> matches;
  for (int i = 0; i < 14; ++i) {
    Correspondence2D3D m;
    m.point = Eigen::Vector3d(3 * u(rng), 3 * u(rng), 7.0 + 2 * u(rng));
    const Eigen::Vector3d p_C = T_W_C.inverse() * m.point;
    m.uv = projectToPixel(p_C, cam.fx, cam.fy, cam.cx, cam.cy);
    matches.push_back(m);
  }
  for (int i = 0; i < 6; ++i) {
    Correspondence2D3D m;
    m.point = Eigen::Vector3d(3 * u(rng), 3 * u(rng), 7.0 + 2 * u(rng));
    m.uv = {upix(rng), upix(rng) * 0.75};
    matches.push_back(m);
  }
  RansacOptions opts;
  opts.seed = 7;
  const auto result = ransacP3p(matches, cam, 2.0, opts);
  REQUIRE(result.has_value());
  std::vector<int> expected;
  for (int i = 0; i < 14; ++i) expected.push_back(i);
  CHECK(result->inliers == expected);
  CHECK(rotationDistance(result->transform, T_W_C) < 1e-3);
  CHECK((result->transform.t - T_W_C.t).norm() < 1e-3);
}

TEST_CASE("ransac p3p with only collinear points returns none") {
  PinholeIntrinsics cam{400, 400, 320, 240};
  std::vector<Correspondence2D3D> matches;
  for (int i = 0; i < 4; ++i) {
    Correspondence2D3D m;
    m.point = Eigen::Vector3d(i, 0, 5);
    m.uv = projectToPixel(m.point, cam.fx, cam.fy, cam.cx, cam.cy);
    matches.push_back(m);
  }
  RansacOptions opts;
  CHECK(!ransacP3p(matches, cam, 2.0, opts).has_value());
}

TEST_CASE("ransac 3d3d recovers exact transform") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> n(0.0, 2.0);
  const Pose6 planted = makePose({0.2, -0.1, 0.4}, {3, -1, 2});
  std::vector<Correspondence3D3D> matches;
  for (int i = 0; i < 20; ++i) {
    Correspondence3D3D m;
    m.p_a = Eigen::Vector3d(n(rng), n(rng), n(rng));
    m.p_b = planted * m.p_a;
    matches.push_back(m);
  }
  RansacOptions opts;
  opts.seed = 3;
  const auto result = ransac3d3d(matches, 0.05, opts);
  REQUIRE(result.has_value());
  CHECK(result->inliers.size() == 20);
  CHECK(rotationDistance(result->transform, planted) < 1e-9);
  CHECK((result->transform.t - planted.t).norm() < 1e-9);
}

TEST_CASE("ransac 3d3d with half outliers recovers planted inliers") {
  std::mt19937_64 rng(43);
  std::normal_distribution<double> n(0.0, 2.0);
  const Pose6 planted = makePose({-0.3, 0.2, 0.1}, {1, 4, -2});
  std::vector<Correspondence3D3D> matches;
  std::vector<int> expected;
  for (int i = 0; i < 20; ++i) {
    Correspondence3D3D m;
    m.p_a = Eigen::Vector3d(n(rng), n(rng), n(rng));
    if (i < 10) {
      m.p_b = planted * m.p_a;
      expected.push_back(i);
    } else {
      // Offset target by >= 10x the inlier threshold.
      m.p_b = planted * m.p_a + Eigen::Vector3d(1.0 + i * 0.1, -1.0, 0.7);
    }
    matches.push_back(m);
  }
  RansacOptions opts;
  opts.seed = 11;
  opts.min_inlier_fraction = 0.3;
  const auto result = ransac3d3d(matches, 0.05, opts);
  REQUIRE(result.has_value());
  CHECK(result->inliers == expected);
}

TEST_CASE("ransac 3d3d all-identical points is degenerate") {
  std::vector<Correspondence3D3D> matches(10);
  for (auto& m : matches) {
    m.p_a = Eigen::Vector3d(1, 2, 3);
    m.p_b = Eigen::Vector3d(4, 5, 6);
  }
  RansacOptions opts;
  CHECK(!ransac3d3d(matches, 0.05, opts).has_value());
}

TEST_CASE("horn covariance is SPD") {
  std::vector<Eigen::Vector3d> pts;
  std::mt19937_64 rng(47);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 8; ++i) pts.emplace_back(n(rng), n(rng), n(rng));
  const Matrix6d cov = hornAlignCovariance(pts, Pose6::identity(), 0.05);
  Eigen::LLT<Matrix6d> llt(cov);
  CHECK(llt.info() == Eigen::Success);
}
