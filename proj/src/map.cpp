#include "atlas/map.h"

#include <Eigen/Cholesky>

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace atlas {

namespace {

void checkCovariance(const Eigen::Ref<const Eigen::MatrixXd>& cov, const char* what) {
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if (((cov - cov.transpose()).cwiseAbs().maxCoeff()) > 1e-9 * scale) {
    throw std::invalid_argument(std::string(what) + ": covariance not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument(std::string(what) + ": covariance not positive definite");
  }
}

}  // namespace

MissionId VIMap::addMission(const Mission& mission) {
  if (!mission.id.isValid()) throw std::invalid_argument("addMission: invalid id");
  if (missions_.count(mission.id)) throw std::invalid_argument("addMission: duplicate id");
  missions_.emplace(mission.id, mission);
  return mission.id;
}

VertexId VIMap::addVertex(const Vertex& vertex) {
  if (!vertex.id.isValid()) throw std::invalid_argument("addVertex: invalid id");
  if (vertices_.count(vertex.id)) throw std::invalid_argument("addVertex: duplicate id");
  if (!missions_.count(vertex.mission)) {
    throw std::invalid_argument("addVertex: unknown mission " + vertex.mission.hex());
  }
  vertices_.emplace(vertex.id, vertex);
  edges_by_vertex_.emplace(vertex.id, std::vector<EdgeId>());
  return vertex.id;
}

EdgeId VIMap::addEdge(const Edge& edge) {
  if (!edge.id.isValid()) throw std::invalid_argument("addEdge: invalid id");
  if (edges_.count(edge.id)) throw std::invalid_argument("addEdge: duplicate id");
  const auto from_it = vertices_.find(edge.from);
  if (from_it == vertices_.end()) {
    throw std::invalid_argument("addEdge: dangling from-vertex " + edge.from.hex());
  }
  const bool is_absolute = std::holds_alternative<AbsolutePoseEdge>(edge.payload);
  const Vertex* to = nullptr;
  if (!is_absolute) {
    const auto to_it = vertices_.find(edge.to);
    if (to_it == vertices_.end()) {
      throw std::invalid_argument("addEdge: dangling to-vertex " + edge.to.hex());
    }
    to = &to_it->second;
  }

  if (edge.isOdometryLike()) {
    if (to->mission != from_it->second.mission) {
      throw std::invalid_argument("addEdge: odometry edge across missions");
    }
    if (to->timestamp_ns <= from_it->second.timestamp_ns) {
      throw std::invalid_argument("addEdge: timestamp regression on odometry chain");
    }
  }

  std::visit(
      [](const auto& payload) {
        using T = std::decay_t<decltype(payload)>;
        if constexpr (std::is_same_v<T, ImuEdge>) {
          checkCovariance(payload.covariance, "ImuEdge");
        } else if constexpr (std::is_same_v<T, LoopClosureEdge>) {
          checkCovariance(payload.covariance, "LoopClosureEdge");
          if (payload.switch_value < 0.0 || payload.switch_value > 1.0) {
            throw std::invalid_argument("LoopClosureEdge: switch outside [0,1]");
          }
          if (payload.switch_prior_var <= 0.0) {
            throw std::invalid_argument("LoopClosureEdge: non-positive switch prior variance");
          }
        } else {
          checkCovariance(payload.covariance, "PoseEdge");
        }
      },
      edge.payload);

  edges_.emplace(edge.id, edge);
  edges_by_vertex_[edge.from].push_back(edge.id);
  if (!is_absolute && edge.to != edge.from) {
    edges_by_vertex_[edge.to].push_back(edge.id);
  }
  return edge.id;
}

LandmarkId VIMap::addLandmark(const Landmark& landmark) {
  if (!landmark.id.isValid()) throw std::invalid_argument("addLandmark: invalid id");
  if (landmarks_.count(landmark.id)) throw std::invalid_argument("addLandmark: duplicate id");
  if (!vertices_.count(landmark.host)) {
    throw std::invalid_argument("addLandmark: dangling host vertex");
  }
  Landmark stored = landmark;
  const auto observations = stored.observations;
  stored.observations.clear();
  landmarks_.emplace(stored.id, stored);
  for (const auto& ref : observations) addObservation(stored.id, ref);
  return stored.id;
}

void VIMap::addObservation(const LandmarkId& landmark_id, const KeypointRef& ref) {
  Landmark& lm = landmark(landmark_id);
  Keypoint& kp = keypointMutable(ref);
  if (std::find(lm.observations.begin(), lm.observations.end(), ref) != lm.observations.end()) {
    return;
  }
  if (kp.landmark.isValid() && kp.landmark != landmark_id) {
    throw std::invalid_argument("addObservation: keypoint already bound to another landmark");
  }
  kp.landmark = landmark_id;
  lm.observations.push_back(ref);
}

void VIMap::removeVertex(const VertexId& id) {
  const auto it = vertices_.find(id);
  if (it == vertices_.end()) throw std::invalid_argument("removeVertex: unknown vertex");
  const auto inc = edges_by_vertex_.find(id);
  if (inc != edges_by_vertex_.end() && !inc->second.empty()) {
    throw std::invalid_argument("removeVertex: vertex still referenced by edges");
  }
  for (auto& [lm_id, lm] : landmarks_) {
    if (lm.host == id) {
      throw std::invalid_argument("removeVertex: vertex still hosts landmark " + lm_id.hex());
    }
    std::erase_if(lm.observations, [&](const KeypointRef& ref) { return ref.vertex == id; });
  }
  attachments_.erase(id);
  edges_by_vertex_.erase(id);
  vertices_.erase(it);
}

void VIMap::removeEdge(const EdgeId& id) {
  const auto it = edges_.find(id);
  if (it == edges_.end()) throw std::invalid_argument("removeEdge: unknown edge");
  auto unlink = [&](const VertexId& v) {
    auto inc = edges_by_vertex_.find(v);
    if (inc != edges_by_vertex_.end()) std::erase(inc->second, id);
  };
  unlink(it->second.from);
  unlink(it->second.to);
  imu_samples_.erase(id);
  edges_.erase(it);
}

void VIMap::removeLandmark(const LandmarkId& id) {
  const auto it = landmarks_.find(id);
  if (it == landmarks_.end()) throw std::invalid_argument("removeLandmark: unknown landmark");
  for (const auto& ref : it->second.observations) {
    keypointMutable(ref).landmark = LandmarkId();
  }
  landmarks_.erase(it);
}

void VIMap::mergeLandmarks(const LandmarkId& survivor, const LandmarkId& victim) {
  if (survivor == victim) return;
  Landmark& keep = landmark(survivor);
  Landmark victim_copy = landmark(victim);
  for (const auto& ref : victim_copy.observations) {
    keypointMutable(ref).landmark = LandmarkId();
  }
  landmarks_.erase(victim);
  for (const auto& ref : victim_copy.observations) {
    addObservation(survivor, ref);
  }
  if (keep.descriptor.empty()) keep.descriptor = victim_copy.descriptor;
  keep.quality = LandmarkQuality::Unknown;
}

const Mission& VIMap::mission(const MissionId& id) const {
  const auto it = missions_.find(id);
  if (it == missions_.end()) throw std::out_of_range("unknown mission " + id.hex());
  return it->second;
}
Mission& VIMap::mission(const MissionId& id) {
  return const_cast<Mission&>(std::as_const(*this).mission(id));
}
const Vertex& VIMap::vertex(const VertexId& id) const {
  const auto it = vertices_.find(id);
  if (it == vertices_.end()) throw std::out_of_range("unknown vertex " + id.hex());
  return it->second;
}
Vertex& VIMap::vertex(const VertexId& id) {
  return const_cast<Vertex&>(std::as_const(*this).vertex(id));
}
const Edge& VIMap::edge(const EdgeId& id) const {
  const auto it = edges_.find(id);
  if (it == edges_.end()) throw std::out_of_range("unknown edge " + id.hex());
  return it->second;
}
Edge& VIMap::edge(const EdgeId& id) {
  return const_cast<Edge&>(std::as_const(*this).edge(id));
}
const Landmark& VIMap::landmark(const LandmarkId& id) const {
  const auto it = landmarks_.find(id);
  if (it == landmarks_.end()) throw std::out_of_range("unknown landmark " + id.hex());
  return it->second;
}
Landmark& VIMap::landmark(const LandmarkId& id) {
  return const_cast<Landmark&>(std::as_const(*this).landmark(id));
}

void VIMap::setFeatureType(const FeatureTypeConfig& config) {
  feature_types_[config.feature_type_id] = config;
}
void VIMap::setCamera(const CameraConfig& config) { cameras_[config.camera_id] = config; }

const FeatureTypeConfig& VIMap::featureType(int id) const {
  const auto it = feature_types_.find(id);
  if (it == feature_types_.end()) {
    throw std::out_of_range("unknown feature type " + std::to_string(id));
  }
  return it->second;
}

const CameraConfig& VIMap::camera(const CameraId& id) const {
  const auto it = cameras_.find(id);
  if (it == cameras_.end()) throw std::out_of_range("unknown camera " + id.hex());
  return it->second;
}

void VIMap::setAttachment(const VertexId& vertex_id, std::vector<std::uint8_t> blob) {
  if (!vertices_.count(vertex_id)) throw std::invalid_argument("setAttachment: unknown vertex");
  attachments_[vertex_id] = std::move(blob);
}

const std::vector<std::uint8_t>* VIMap::attachment(const VertexId& vertex_id) const {
  const auto it = attachments_.find(vertex_id);
  return it == attachments_.end() ? nullptr : &it->second;
}

void VIMap::setImuSamples(const EdgeId& edge_id, std::vector<ImuSample> samples) {
  if (!edges_.count(edge_id)) throw std::invalid_argument("setImuSamples: unknown edge");
  imu_samples_[edge_id] = std::move(samples);
}

const std::vector<ImuSample>* VIMap::imuSamples(const EdgeId& edge_id) const {
  const auto it = imu_samples_.find(edge_id);
  return it == imu_samples_.end() ? nullptr : &it->second;
}

const std::vector<EdgeId>& VIMap::edgesOfVertex(const VertexId& id) const {
  static const std::vector<EdgeId> kEmpty;
  const auto it = edges_by_vertex_.find(id);
  return it == edges_by_vertex_.end() ? kEmpty : it->second;
}

std::vector<VertexId> VIMap::missionVertexChain(const MissionId& id) const {
  std::vector<const Vertex*> chain;
  for (const auto& [vid, v] : vertices_) {
    if (v.mission == id) chain.push_back(&v);
  }
  std::sort(chain.begin(), chain.end(), [](const Vertex* a, const Vertex* b) {
    if (a->timestamp_ns != b->timestamp_ns) return a->timestamp_ns < b->timestamp_ns;
    return a->id < b->id;
  });
  std::vector<VertexId> out;
  out.reserve(chain.size());
  for (const Vertex* v : chain) out.push_back(v->id);
  return out;
}

Pose6 VIMap::globalPose(const VertexId& id) const {
  const Vertex& v = vertex(id);
  return mission(v.mission).T_G_M * v.T_M_I;
}

const Keypoint& VIMap::keypoint(const KeypointRef& ref) const {
  const Vertex& v = vertex(ref.vertex);
  if (ref.frame >= v.frames.size()) throw std::out_of_range("keypoint: bad frame index");
  const VisualFrame& frame = v.frames[ref.frame];
  if (ref.keypoint >= frame.keypoints.size()) {
    throw std::out_of_range("keypoint: bad keypoint index");
  }
  return frame.keypoints[ref.keypoint];
}

Keypoint& VIMap::keypointMutable(const KeypointRef& ref) {
  return const_cast<Keypoint&>(std::as_const(*this).keypoint(ref));
}

std::optional<MissionId> VIMap::firstAnchoredMission() const {
  for (const auto& [id, m] : missions_) {
    if (m.baseframe_known) return id;
  }
  return std::nullopt;
}

std::vector<std::string> VIMap::checkConsistency() const {
  std::vector<std::string> problems;
  auto complain = [&](const std::string& msg) { problems.push_back(msg); };

  for (const auto& [id, v] : vertices_) {
    if (!missions_.count(v.mission)) {
      complain("vertex " + id.hex() + " references unknown mission");
    }
    for (std::size_t f = 0; f < v.frames.size(); ++f) {
      if (!cameras_.count(v.frames[f].camera)) {
        complain("vertex " + id.hex() + " frame references unknown camera");
      }
      for (std::size_t k = 0; k < v.frames[f].keypoints.size(); ++k) {
        const Keypoint& kp = v.frames[f].keypoints[k];
        const auto ft = feature_types_.find(kp.feature_type);
        if (ft == feature_types_.end()) {
          complain("keypoint with unknown feature type in vertex " + id.hex());
        } else if (kp.descriptor.size() != ft->second.descriptorByteWidth()) {
          complain("descriptor width mismatch in vertex " + id.hex());
        }
        if (kp.landmark.isValid()) {
          const auto lm = landmarks_.find(kp.landmark);
          if (lm == landmarks_.end()) {
            complain("keypoint references unknown landmark in vertex " + id.hex());
          } else {
            const KeypointRef ref{id, static_cast<std::uint32_t>(f),
                                  static_cast<std::uint32_t>(k)};
            if (std::find(lm->second.observations.begin(), lm->second.observations.end(), ref) ==
                lm->second.observations.end()) {
              complain("keypoint backref missing from landmark " + kp.landmark.hex());
            }
          }
        }
      }
    }
  }

  for (const auto& [id, e] : edges_) {
    const auto from = vertices_.find(e.from);
    if (from == vertices_.end()) {
      complain("edge " + id.hex() + " has dangling from-vertex");
      continue;
    }
    if (!std::holds_alternative<AbsolutePoseEdge>(e.payload)) {
      const auto to = vertices_.find(e.to);
      if (to == vertices_.end()) {
        complain("edge " + id.hex() + " has dangling to-vertex");
        continue;
      }
      if (e.isOdometryLike()) {
        if (to->second.mission != from->second.mission) {
          complain("odometry edge " + id.hex() + " spans missions");
        }
        if (to->second.timestamp_ns <= from->second.timestamp_ns) {
          complain("odometry edge " + id.hex() + " violates time order");
        }
      }
    }
    if (const auto* lc = std::get_if<LoopClosureEdge>(&e.payload)) {
      if (lc->switch_value < 0.0 || lc->switch_value > 1.0) {
        complain("loop closure edge " + id.hex() + " has switch outside [0,1]");
      }
    }
  }

  for (const auto& [id, lm] : landmarks_) {
    if (!vertices_.count(lm.host)) {
      complain("landmark " + id.hex() + " has dangling host");
      continue;
    }
    for (const auto& ref : lm.observations) {
      const auto v = vertices_.find(ref.vertex);
      if (v == vertices_.end()) {
        complain("landmark " + id.hex() + " observation references unknown vertex");
        continue;
      }
      if (ref.frame >= v->second.frames.size() ||
          ref.keypoint >= v->second.frames[ref.frame].keypoints.size()) {
        complain("landmark " + id.hex() + " observation is out of range");
        continue;
      }
      const Keypoint& kp = v->second.frames[ref.frame].keypoints[ref.keypoint];
      if (kp.landmark != id) {
        complain("landmark " + id.hex() + " observation lacks keypoint backref");
      }
    }
  }

  return problems;
}

void requireConsistent(const VIMap& map, const std::string& context) {
  const auto problems = map.checkConsistency();
  if (!problems.empty()) {
    std::ostringstream oss;
    oss << context << ": map inconsistent:";
    for (const auto& p : problems) oss << "\n  " << p;
    throw std::runtime_error(oss.str());
  }
}

}  // namespace atlas
