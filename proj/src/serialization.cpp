#include "atlas/serialization.h"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace atlas {

namespace {

constexpr char kMagic[8] = {'A', 'T', 'L', 'A', 'S', 'M', 'A', 'P'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::uint32_t kChunkConfig = 1;
constexpr std::uint32_t kChunkMission = 2;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) {
    if (v == 0.0) v = 0.0;  // canonicalize -0.0
    u64(std::bit_cast<std::uint64_t>(v));
  }
  template <typename Tag>
  void id(const Id128<Tag>& v) {
    u64(v.hi);
    u64(v.lo);
  }
  void vec3(const Eigen::Vector3d& v) {
    f64(v.x());
    f64(v.y());
    f64(v.z());
  }
  void pose(const Pose6& p) {
    f64(p.q.x());
    f64(p.q.y());
    f64(p.q.z());
    f64(p.q.w());
    vec3(p.t);
  }
  void quat(const Eigen::Quaterniond& q) {
    f64(q.x());
    f64(q.y());
    f64(q.z());
    f64(q.w());
  }
  template <int N>
  void mat(const Eigen::Matrix<double, N, N>& m) {
    for (int r = 0; r < N; ++r)
      for (int c = 0; c < N; ++c) f64(m(r, c));
  }
  void bytes(const std::vector<std::uint8_t>& b) {
    buf_.insert(buf_.end(), b.begin(), b.end());
  }

  [[nodiscard]] const std::vector<std::uint8_t>& data() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  template <typename Tag>
  Id128<Tag> id() {
    Id128<Tag> v;
    v.hi = u64();
    v.lo = u64();
    return v;
  }
  Eigen::Vector3d vec3() {
    Eigen::Vector3d v;
    v.x() = f64();
    v.y() = f64();
    v.z() = f64();
    return v;
  }
  Pose6 pose() {
    Pose6 p;
    const double x = f64(), y = f64(), z = f64(), w = f64();
    p.q = Eigen::Quaterniond(w, x, y, z);
    p.t = vec3();
    p.normalize();
    return p;
  }
  Eigen::Quaterniond quat() {
    const double x = f64(), y = f64(), z = f64(), w = f64();
    return Eigen::Quaterniond(w, x, y, z);
  }
  template <int N>
  Eigen::Matrix<double, N, N> mat() {
    Eigen::Matrix<double, N, N> m;
    for (int r = 0; r < N; ++r)
      for (int c = 0; c < N; ++c) m(r, c) = f64();
    return m;
  }
  std::vector<std::uint8_t> bytes(std::size_t n) {
    need(n);
    std::vector<std::uint8_t> out(data_ + pos_, data_ + pos_ + n);
    pos_ += n;
    return out;
  }
  [[nodiscard]] std::size_t remaining() const { return size_ - pos_; }
  [[nodiscard]] bool done() const { return pos_ == size_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > size_) throw SerializationError("truncated chunk");
  }
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32Of(const std::vector<std::uint8_t>& payload) {
  uLong crc = crc32(0L, Z_NULL, 0);
  if (!payload.empty()) {
    crc = crc32(crc, payload.data(), static_cast<uInt>(payload.size()));
  }
  return static_cast<std::uint32_t>(crc);
}

void writeConfigChunk(const VIMap& map, Writer& w) {
  w.u32(static_cast<std::uint32_t>(map.featureTypes().size()));
  for (const auto& [id, ft] : map.featureTypes()) {
    w.i32(ft.feature_type_id);
    w.u8(static_cast<std::uint8_t>(ft.descriptor_kind));
    w.i32(ft.descriptor_size);
    w.f64(ft.match_threshold);
    w.f64(ft.lowe_ratio);
    w.f64(ft.ransac_pixel_threshold);
    w.f64(ft.ransac_3d_threshold);
  }
  w.u32(static_cast<std::uint32_t>(map.cameras().size()));
  for (const auto& [id, cam] : map.cameras()) {
    w.id(cam.camera_id);
    w.f64(cam.fx);
    w.f64(cam.fy);
    w.f64(cam.cx);
    w.f64(cam.cy);
    w.i32(cam.width);
    w.i32(cam.height);
    w.pose(cam.T_I_C);
  }
}

void writeMissionChunk(const VIMap& map, const Mission& mission, Writer& w) {
  w.id(mission.id);
  w.pose(mission.T_G_M);
  w.u8(mission.baseframe_known ? 1 : 0);

  // Vertices of this mission (std::map order = sorted by id).
  std::vector<const Vertex*> verts;
  for (const auto& [vid, v] : map.vertices()) {
    if (v.mission == mission.id) verts.push_back(&v);
  }
  w.u32(static_cast<std::uint32_t>(verts.size()));
  for (const Vertex* v : verts) {
    w.id(v->id);
    w.i64(v->timestamp_ns);
    w.pose(v->T_M_I);
    w.vec3(v->v_M);
    w.vec3(v->bias_gyro);
    w.vec3(v->bias_accel);
    w.u32(static_cast<std::uint32_t>(v->frames.size()));
    for (const VisualFrame& frame : v->frames) {
      w.id(frame.camera);
      w.u32(static_cast<std::uint32_t>(frame.keypoints.size()));
      for (const Keypoint& kp : frame.keypoints) {
        w.f64(kp.uv.x());
        w.f64(kp.uv.y());
        w.f64(kp.depth);
        w.i32(kp.feature_type);
        w.i64(kp.track_id);
        w.u32(static_cast<std::uint32_t>(kp.descriptor.size()));
        w.bytes(kp.descriptor);
      }
    }
    const auto* blob = map.attachment(v->id);
    w.u8(blob ? 1 : 0);
    if (blob) {
      w.u64(blob->size());
      w.bytes(*blob);
    }
  }

  // Edges whose from-vertex lives in this mission.
  std::vector<const Edge*> edges;
  for (const auto& [eid, e] : map.edges()) {
    if (map.vertex(e.from).mission == mission.id) edges.push_back(&e);
  }
  w.u32(static_cast<std::uint32_t>(edges.size()));
  for (const Edge* e : edges) {
    w.id(e->id);
    w.id(e->from);
    w.id(e->to);
    w.u8(static_cast<std::uint8_t>(e->payload.index()));
    if (const auto* odo = std::get_if<OdometryEdge>(&e->payload)) {
      w.pose(odo->T_A_B);
      w.mat<6>(odo->covariance);
    } else if (const auto* imu = std::get_if<ImuEdge>(&e->payload)) {
      w.quat(imu->delta_q);
      w.vec3(imu->delta_v);
      w.vec3(imu->delta_p);
      w.f64(imu->delta_t);
      w.mat<9>(imu->covariance);
      w.vec3(imu->bias_gyro_ref);
      w.vec3(imu->bias_accel_ref);
      const auto* samples = map.imuSamples(e->id);
      w.u8(samples ? 1 : 0);
      if (samples) {
        w.u32(static_cast<std::uint32_t>(samples->size()));
        for (const ImuSample& s : *samples) {
          w.f64(s.t);
          w.vec3(s.gyro);
          w.vec3(s.accel);
        }
      }
    } else if (const auto* lc = std::get_if<LoopClosureEdge>(&e->payload)) {
      w.pose(lc->T_A_B);
      w.mat<6>(lc->covariance);
      w.f64(lc->switch_value);
      w.f64(lc->switch_prior_var);
      w.u8(static_cast<std::uint8_t>(lc->method));
    } else if (const auto* ab = std::get_if<AbsolutePoseEdge>(&e->payload)) {
      w.pose(ab->T_G_I);
      w.mat<6>(ab->covariance);
    }
  }

  // Landmarks hosted in this mission.
  std::vector<const Landmark*> landmarks;
  for (const auto& [lid, lm] : map.landmarks()) {
    if (map.vertex(lm.host).mission == mission.id) landmarks.push_back(&lm);
  }
  w.u32(static_cast<std::uint32_t>(landmarks.size()));
  for (const Landmark* lm : landmarks) {
    w.id(lm->id);
    w.id(lm->host);
    w.vec3(lm->p_M);
    w.u8(static_cast<std::uint8_t>(lm->kind));
    w.u8(static_cast<std::uint8_t>(lm->quality));
    w.i32(lm->class_label);
    w.i32(lm->feature_type);
    w.u32(static_cast<std::uint32_t>(lm->descriptor.size()));
    w.bytes(lm->descriptor);
    auto obs = lm->observations;
    std::sort(obs.begin(), obs.end());
    w.u32(static_cast<std::uint32_t>(obs.size()));
    for (const KeypointRef& ref : obs) {
      w.id(ref.vertex);
      w.u32(ref.frame);
      w.u32(ref.keypoint);
    }
  }
}

struct StagedMission {
  Mission mission;
  std::vector<Vertex> vertices;
  std::vector<std::pair<VertexId, std::vector<std::uint8_t>>> attachments;
  std::vector<Edge> edges;
  std::vector<std::pair<EdgeId, std::vector<ImuSample>>> imu_samples;
  std::vector<Landmark> landmarks;
};

StagedMission readMissionChunk(Reader& r) {
  StagedMission out;
  out.mission.id = r.id<MissionIdTag>();
  out.mission.T_G_M = r.pose();
  out.mission.baseframe_known = r.u8() != 0;

  const std::uint32_t n_vertices = r.u32();
  for (std::uint32_t i = 0; i < n_vertices; ++i) {
    Vertex v;
    v.id = r.id<VertexIdTag>();
    v.mission = out.mission.id;
    v.timestamp_ns = r.i64();
    v.T_M_I = r.pose();
    v.v_M = r.vec3();
    v.bias_gyro = r.vec3();
    v.bias_accel = r.vec3();
    const std::uint32_t n_frames = r.u32();
    for (std::uint32_t f = 0; f < n_frames; ++f) {
      VisualFrame frame;
      frame.camera = r.id<CameraIdTag>();
      const std::uint32_t n_kp = r.u32();
      for (std::uint32_t k = 0; k < n_kp; ++k) {
        Keypoint kp;
        kp.uv.x() = r.f64();
        kp.uv.y() = r.f64();
        kp.depth = r.f64();
        kp.feature_type = r.i32();
        kp.track_id = r.i64();
        kp.descriptor = r.bytes(r.u32());
        frame.keypoints.push_back(std::move(kp));
      }
      v.frames.push_back(std::move(frame));
    }
    if (r.u8() != 0) {
      const std::uint64_t blob_len = r.u64();
      out.attachments.emplace_back(v.id, r.bytes(blob_len));
    }
    out.vertices.push_back(std::move(v));
  }

  const std::uint32_t n_edges = r.u32();
  for (std::uint32_t i = 0; i < n_edges; ++i) {
    Edge e;
    e.id = r.id<EdgeIdTag>();
    e.from = r.id<VertexIdTag>();
    e.to = r.id<VertexIdTag>();
    const std::uint8_t tag = r.u8();
    switch (tag) {
      case 0: {
        OdometryEdge odo;
        odo.T_A_B = r.pose();
        odo.covariance = r.mat<6>();
        e.payload = odo;
        break;
      }
      case 1: {
        ImuEdge imu;
        imu.delta_q = r.quat();
        imu.delta_v = r.vec3();
        imu.delta_p = r.vec3();
        imu.delta_t = r.f64();
        imu.covariance = r.mat<9>();
        imu.bias_gyro_ref = r.vec3();
        imu.bias_accel_ref = r.vec3();
        e.payload = imu;
        if (r.u8() != 0) {
          const std::uint32_t n = r.u32();
          std::vector<ImuSample> samples(n);
          for (std::uint32_t s = 0; s < n; ++s) {
            samples[s].t = r.f64();
            samples[s].gyro = r.vec3();
            samples[s].accel = r.vec3();
          }
          out.imu_samples.emplace_back(e.id, std::move(samples));
        }
        break;
      }
      case 2: {
        LoopClosureEdge lc;
        lc.T_A_B = r.pose();
        lc.covariance = r.mat<6>();
        lc.switch_value = r.f64();
        lc.switch_prior_var = r.f64();
        lc.method = static_cast<LoopClosureMethod>(r.u8());
        e.payload = lc;
        break;
      }
      case 3: {
        AbsolutePoseEdge ab;
        ab.T_G_I = r.pose();
        ab.covariance = r.mat<6>();
        e.payload = ab;
        break;
      }
      default:
        throw SerializationError("unknown edge variant tag");
    }
    out.edges.push_back(std::move(e));
  }

  const std::uint32_t n_landmarks = r.u32();
  for (std::uint32_t i = 0; i < n_landmarks; ++i) {
    Landmark lm;
    lm.id = r.id<LandmarkIdTag>();
    lm.host = r.id<VertexIdTag>();
    lm.p_M = r.vec3();
    lm.kind = static_cast<LandmarkKind>(r.u8());
    lm.quality = static_cast<LandmarkQuality>(r.u8());
    lm.class_label = r.i32();
    lm.feature_type = r.i32();
    lm.descriptor = r.bytes(r.u32());
    const std::uint32_t n_obs = r.u32();
    for (std::uint32_t o = 0; o < n_obs; ++o) {
      KeypointRef ref;
      ref.vertex = r.id<VertexIdTag>();
      ref.frame = r.u32();
      ref.keypoint = r.u32();
      lm.observations.push_back(ref);
    }
    out.landmarks.push_back(std::move(lm));
  }

  if (!r.done()) throw SerializationError("trailing bytes in mission chunk");
  return out;
}

}  // namespace

std::vector<std::uint8_t> serializeMapToBytes(const VIMap& map) {
  Writer out;
  for (char c : kMagic) out.u8(static_cast<std::uint8_t>(c));
  out.u32(kFormatVersion);
  out.u32(static_cast<std::uint32_t>(1 + map.missions().size()));

  auto emitChunk = [&out](std::uint32_t type, const Writer& payload) {
    out.u32(type);
    out.u64(payload.data().size());
    out.bytes(payload.data());
    out.u32(crc32Of(payload.data()));
  };

  Writer config;
  writeConfigChunk(map, config);
  emitChunk(kChunkConfig, config);

  for (const auto& [id, mission] : map.missions()) {
    Writer chunk;
    writeMissionChunk(map, mission, chunk);
    emitChunk(kChunkMission, chunk);
  }
  return out.data();
}

VIMap deserializeMapFromBytes(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes.data(), bytes.size());
  for (char c : kMagic) {
    if (r.u8() != static_cast<std::uint8_t>(c)) throw SerializationError("bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw SerializationError("format version mismatch: file has " + std::to_string(version) +
                             ", expected " + std::to_string(kFormatVersion));
  }
  const std::uint32_t chunk_count = r.u32();

  VIMap map;
  std::vector<StagedMission> staged;
  for (std::uint32_t c = 0; c < chunk_count; ++c) {
    const std::uint32_t type = r.u32();
    const std::uint64_t size = r.u64();
    std::vector<std::uint8_t> payload = r.bytes(size);
    const std::uint32_t crc = r.u32();
    if (crc != crc32Of(payload)) throw SerializationError("chunk checksum failure");
    Reader pr(payload.data(), payload.size());
    if (type == kChunkConfig) {
      const std::uint32_t n_ft = pr.u32();
      for (std::uint32_t i = 0; i < n_ft; ++i) {
        FeatureTypeConfig ft;
        ft.feature_type_id = pr.i32();
        ft.descriptor_kind = static_cast<DescriptorKind>(pr.u8());
        ft.descriptor_size = pr.i32();
        ft.match_threshold = pr.f64();
        ft.lowe_ratio = pr.f64();
        ft.ransac_pixel_threshold = pr.f64();
        ft.ransac_3d_threshold = pr.f64();
        map.setFeatureType(ft);
      }
      const std::uint32_t n_cam = pr.u32();
      for (std::uint32_t i = 0; i < n_cam; ++i) {
        CameraConfig cam;
        cam.camera_id = pr.id<CameraIdTag>();
        cam.fx = pr.f64();
        cam.fy = pr.f64();
        cam.cx = pr.f64();
        cam.cy = pr.f64();
        cam.width = pr.i32();
        cam.height = pr.i32();
        cam.T_I_C = pr.pose();
        map.setCamera(cam);
      }
      if (!pr.done()) throw SerializationError("trailing bytes in config chunk");
    } else if (type == kChunkMission) {
      staged.push_back(readMissionChunk(pr));
    } else {
      throw SerializationError("unknown chunk type");
    }
  }
  if (!r.done()) throw SerializationError("trailing bytes after last chunk");

  for (const auto& sm : staged) map.addMission(sm.mission);
  for (const auto& sm : staged) {
    for (const auto& v : sm.vertices) map.addVertex(v);
  }
  for (const auto& sm : staged) {
    for (const auto& e : sm.edges) map.addEdge(e);
    for (const auto& [eid, samples] : sm.imu_samples) map.setImuSamples(eid, samples);
    for (const auto& [vid, blob] : sm.attachments) map.setAttachment(vid, blob);
  }
  for (const auto& sm : staged) {
    for (const auto& lm : sm.landmarks) map.addLandmark(lm);
  }
  return map;
}

void serializeMap(const VIMap& map, const std::string& path) {
  writeFileBytes(path, serializeMapToBytes(map));
}

VIMap deserializeMap(const std::string& path) {
  return deserializeMapFromBytes(readFileBytes(path));
}

std::vector<std::uint8_t> readFileBytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SerializationError("cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::streamsize size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), size)) {
    throw SerializationError("failed reading " + path);
  }
  return bytes;
}

void writeFileBytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SerializationError("cannot write " + path);
  if (!bytes.empty()) out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  if (!out) throw SerializationError("failed writing " + path);
}

}  // namespace atlas
