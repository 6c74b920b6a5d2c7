#include <doctest.h>

#include "atlas/map.h"
#include "atlas/serialization.h"

using namespace atlas;

namespace {

struct Fixture {
  VIMap map;
  IdGenerator gen{42};
  MissionId mission;
  CameraId camera;

  Fixture() {
    Mission m;
    m.id = gen.next<MissionId>();
    m.baseframe_known = true;
    mission = map.addMission(m);

    CameraConfig cam;
    cam.camera_id = gen.next<CameraId>();
    cam.fx = cam.fy = 400.0;
    cam.cx = 320.0;
    cam.cy = 240.0;
    cam.width = 640;
    cam.height = 480;
    camera = cam.camera_id;
    map.setCamera(cam);

    FeatureTypeConfig ft;
    ft.feature_type_id = 0;
    ft.descriptor_kind = DescriptorKind::Binary;
    ft.descriptor_size = 64;
    map.setFeatureType(ft);
  }

  VertexId addVertexAt(std::int64_t t_ns) {
    Vertex v;
    v.id = gen.next<VertexId>();
    v.mission = mission;
    v.timestamp_ns = t_ns;
    return map.addVertex(v);
  }
};

}  // namespace

TEST_CASE("duplicate vertex id rejected") {
  Fixture f;
  Vertex v;
  v.id = f.gen.next<VertexId>();
  v.mission = f.mission;
  f.map.addVertex(v);
  CHECK_THROWS_AS(f.map.addVertex(v), std::invalid_argument);
}

TEST_CASE("two vertices and odometry edge") {
  Fixture f;
  const VertexId a = f.addVertexAt(0);
  const VertexId b = f.addVertexAt(100);
  Edge e;
  e.id = f.gen.next<EdgeId>();
  e.from = a;
  e.to = b;
  e.payload = OdometryEdge{};
  f.map.addEdge(e);
  CHECK(f.map.vertices().size() == 2);
  CHECK(f.map.edges().size() == 1);
  CHECK(f.map.checkConsistency().empty());
}

TEST_CASE("timestamp regression on odometry chain rejected") {
  Fixture f;
  const VertexId a = f.addVertexAt(100);
  const VertexId b = f.addVertexAt(50);
  Edge e;
  e.id = f.gen.next<EdgeId>();
  e.from = a;
  e.to = b;
  e.payload = OdometryEdge{};
  CHECK_THROWS_AS(f.map.addEdge(e), std::invalid_argument);
}

TEST_CASE("dangling edge endpoint rejected") {
  Fixture f;
  const VertexId a = f.addVertexAt(0);
  Edge e;
  e.id = f.gen.next<EdgeId>();
  e.from = a;
  e.to = f.gen.next<VertexId>();
  e.payload = OdometryEdge{};
  CHECK_THROWS_AS(f.map.addEdge(e), std::invalid_argument);
}

TEST_CASE("loop closure across missions accepted with default switch") {
  Fixture f;
  Mission m2;
  m2.id = f.gen.next<MissionId>();
  f.map.addMission(m2);

  const VertexId a = f.addVertexAt(0);
  Vertex v;
  v.id = f.gen.next<VertexId>();
  v.mission = m2.id;
  v.timestamp_ns = 5;
  f.map.addVertex(v);

  Edge e;
  e.id = f.gen.next<EdgeId>();
  e.from = a;
  e.to = v.id;
  LoopClosureEdge lc;
  e.payload = lc;
  f.map.addEdge(e);
  const auto& stored = std::get<LoopClosureEdge>(f.map.edge(e.id).payload);
  CHECK(stored.switch_value == 1.0);
  CHECK(f.map.checkConsistency().empty());
}

TEST_CASE("non-spd covariance rejected") {
  Fixture f;
  const VertexId a = f.addVertexAt(0);
  const VertexId b = f.addVertexAt(100);
  Edge e;
  e.id = f.gen.next<EdgeId>();
  e.from = a;
  e.to = b;
  OdometryEdge odo;
  odo.covariance = -Matrix6d::Identity();
  e.payload = odo;
  CHECK_THROWS_AS(f.map.addEdge(e), std::invalid_argument);
}

TEST_CASE("landmark observation wiring and merge") {
  Fixture f;
  const VertexId a = f.addVertexAt(0);
  const VertexId b = f.addVertexAt(100);
  for (const VertexId vid : {a, b}) {
    Vertex& v = f.map.vertex(vid);
    VisualFrame frame;
    frame.camera = f.camera;
    for (int k = 0; k < 5; ++k) {
      Keypoint kp;
      kp.descriptor.assign(8, 0);
      frame.keypoints.push_back(kp);
    }
    v.frames.push_back(frame);
  }

  Landmark lm1;
  lm1.id = f.gen.next<LandmarkId>();
  lm1.host = a;
  lm1.observations = {{a, 0, 0}, {a, 0, 1}, {b, 0, 0}};
  f.map.addLandmark(lm1);

  Landmark lm2;
  lm2.id = f.gen.next<LandmarkId>();
  lm2.host = b;
  lm2.observations = {{b, 0, 1}, {b, 0, 2}};
  f.map.addLandmark(lm2);

  CHECK(f.map.checkConsistency().empty());

  // 3 + 2 observations merge into one landmark with 5.
  f.map.mergeLandmarks(lm1.id, lm2.id);
  CHECK(f.map.landmarks().size() == 1);
  CHECK(f.map.landmark(lm1.id).observations.size() == 5);
  CHECK(f.map.checkConsistency().empty());
  CHECK(f.map.keypoint({b, 0, 2}).landmark == lm1.id);
}

TEST_CASE("serialization round trip is canonical and idempotent") {
  Fixture f;
  const VertexId a = f.addVertexAt(0);
  const VertexId b = f.addVertexAt(100);
  Edge e;
  e.id = f.gen.next<EdgeId>();
  e.from = a;
  e.to = b;
  OdometryEdge odo;
  odo.T_A_B.t = Eigen::Vector3d(1, 2, 3);
  e.payload = odo;
  f.map.addEdge(e);

  const auto bytes1 = serializeMapToBytes(f.map);
  VIMap copy = deserializeMapFromBytes(bytes1);
  const auto bytes2 = serializeMapToBytes(copy);
  CHECK(bytes1 == bytes2);
  CHECK(copy.vertices().size() == 2);
  CHECK(copy.edges().size() == 1);
}

TEST_CASE("empty map round trip") {
  VIMap map;
  const auto bytes = serializeMapToBytes(map);
  VIMap copy = deserializeMapFromBytes(bytes);
  CHECK(copy.missions().empty());
  CHECK(copy.vertices().empty());
  CHECK(serializeMapToBytes(copy) == bytes);
}

TEST_CASE("insertion order does not change serialized bytes") {
  // Same content added in different orders serializes identically.
  auto build = [](bool reversed) {
    VIMap map;
    IdGenerator gen(123);
    Mission m;
    m.id = gen.next<MissionId>();
    map.addMission(m);
    Vertex v1;
    v1.id = gen.next<VertexId>();
    v1.mission = m.id;
    v1.timestamp_ns = 0;
    Vertex v2;
    v2.id = gen.next<VertexId>();
    v2.mission = m.id;
    v2.timestamp_ns = 10;
    if (reversed) {
      map.addVertex(v2);
      map.addVertex(v1);
    } else {
      map.addVertex(v1);
      map.addVertex(v2);
    }
    return serializeMapToBytes(map);
  };
  CHECK(build(false) == build(true));
}

TEST_CASE("corrupted data is rejected") {
  VIMap map;
  IdGenerator gen(5);
  Mission m;
  m.id = gen.next<MissionId>();
  map.addMission(m);
  auto bytes = serializeMapToBytes(map);

  SUBCASE("bad magic") {
    bytes[0] ^= 0xFF;
    CHECK_THROWS_AS(deserializeMapFromBytes(bytes), SerializationError);
  }
  SUBCASE("version mismatch") {
    bytes[8] = 99;
    CHECK_THROWS_AS(deserializeMapFromBytes(bytes), SerializationError);
  }
  SUBCASE("payload corruption fails checksum") {
    bytes[bytes.size() - 6] ^= 0x01;
    CHECK_THROWS_AS(deserializeMapFromBytes(bytes), SerializationError);
  }
  SUBCASE("truncated file") {
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(deserializeMapFromBytes(bytes), SerializationError);
  }
}
