#include "atlas/console_ops.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "atlas/horn.h"
#include "atlas/landmark_quality.h"

namespace atlas {

VIMap mergeMaps(const VIMap& map_a, const VIMap& map_b) {
  for (const auto& [mid, m] : map_b.missions()) {
    if (map_a.hasMission(mid)) {
      throw std::invalid_argument("mergeMaps: mission id collision " + mid.hex());
    }
  }

  VIMap out = map_a;
  for (const auto& [id, ft] : map_b.featureTypes()) {
    if (map_a.featureTypes().count(id)) {
      const auto& existing = map_a.featureType(id);
      if (existing.descriptor_kind != ft.descriptor_kind ||
          existing.descriptor_size != ft.descriptor_size) {
        throw std::invalid_argument("mergeMaps: conflicting feature type " + std::to_string(id));
      }
      continue;
    }
    out.setFeatureType(ft);
  }
  for (const auto& [id, cam] : map_b.cameras()) {
    if (!map_a.cameras().count(id)) out.setCamera(cam);
  }
  for (const auto& [mid, m] : map_b.missions()) out.addMission(m);
  for (const auto& [vid, v] : map_b.vertices()) out.addVertex(v);
  for (const auto& [eid, e] : map_b.edges()) out.addEdge(e);
  for (const auto& [eid, samples] : map_b.imuSampleStore()) out.setImuSamples(eid, samples);
  for (const auto& [vid, blob] : map_b.attachments()) out.setAttachment(vid, blob);
  for (const auto& [lid, lm] : map_b.landmarks()) out.addLandmark(lm);

  requireConsistent(out, "mergeMaps");
  return out;
}

KeyframeReport keyframeMap(VIMap& map, const KeyframeParams& params) {
  KeyframeReport report;

  std::set<VertexId> protected_vertices;
  for (const auto& [eid, e] : map.edges()) {
    if (std::holds_alternative<LoopClosureEdge>(e.payload)) {
      protected_vertices.insert(e.from);
      protected_vertices.insert(e.to);
    } else if (std::holds_alternative<AbsolutePoseEdge>(e.payload)) {
      protected_vertices.insert(e.from);
    }
  }

  std::vector<MissionId> missions;
  for (const auto& [mid, m] : map.missions()) missions.push_back(mid);

  for (const MissionId& mid : missions) {
    const auto chain = map.missionVertexChain(mid);
    if (chain.size() < 3) continue;

    // Decide the keep set: ends, constrained vertices, and vertices past the
    // motion thresholds relative to the last kept one.
    std::vector<bool> keep(chain.size(), false);
    keep.front() = keep.back() = true;
    std::size_t last_kept = 0;
    for (std::size_t i = 1; i + 1 < chain.size(); ++i) {
      const Vertex& v = map.vertex(chain[i]);
      const Vertex& ref = map.vertex(chain[last_kept]);
      const double dt = static_cast<double>(v.timestamp_ns - ref.timestamp_ns) * 1e-9;
      const double translation = (v.T_M_I.t - ref.T_M_I.t).norm();
      const double rotation = rotationDistance(ref.T_M_I, v.T_M_I);
      const bool passes = dt >= params.min_dt_s && translation >= params.min_translation_m &&
                          rotation >= params.min_rotation_rad;
      const bool is_protected = protected_vertices.count(chain[i]) > 0;
      if (passes || is_protected) {
        keep[i] = true;
        last_kept = i;
        if (!passes) ++report.retained_for_constraints;
      }
    }

    // Collect the odometry edges along the chain.
    std::map<VertexId, EdgeId> odometry_out;
    std::vector<EdgeId> imu_edges;
    for (const auto& [eid, e] : map.edges()) {
      if (map.vertex(e.from).mission != mid) continue;
      if (std::holds_alternative<OdometryEdge>(e.payload)) {
        odometry_out[e.from] = eid;
      } else if (std::holds_alternative<ImuEdge>(e.payload)) {
        imu_edges.push_back(eid);
      }
    }

    // Compose odometry across removed stretches.
    struct ComposedEdge {
      VertexId from, to;
      Pose6 T;
      Matrix6d cov;
    };
    std::vector<ComposedEdge> composed;
    std::vector<EdgeId> edges_to_remove;
    std::size_t segment_start = 0;
    bool composing = false;
    Pose6 T_acc;
    Matrix6d cov_acc = Matrix6d::Zero();
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
      const auto eit = odometry_out.find(chain[i]);
      if (eit == odometry_out.end()) {
        composing = false;  // broken chain; leave as is
        segment_start = i + 1;
        continue;
      }
      const auto& edge = map.edge(eit->second);
      const auto& odo = std::get<OdometryEdge>(edge.payload);
      if (!composing) {
        segment_start = i;
        T_acc = Pose6::identity();
        cov_acc = Matrix6d::Zero();
        composing = true;
      }
      const Matrix6d adj = se3Adjoint(odo.T_A_B.inverse());
      cov_acc = adj * cov_acc * adj.transpose() + odo.covariance;
      T_acc = T_acc * odo.T_A_B;
      if (keep[i + 1]) {
        if (i + 1 - segment_start > 1) {
          composed.push_back({chain[segment_start], chain[i + 1], T_acc, cov_acc});
          for (std::size_t j = segment_start; j <= i; ++j) {
            edges_to_remove.push_back(odometry_out.at(chain[j]));
          }
        }
        composing = false;
        segment_start = i + 1;
      }
    }

    // IMU edges touching removed vertices are dropped with them.
    for (const EdgeId& eid : imu_edges) {
      const Edge& e = map.edge(eid);
      auto removed = [&](const VertexId& v) {
        for (std::size_t i = 0; i < chain.size(); ++i) {
          if (chain[i] == v) return !keep[i];
        }
        return false;
      };
      if (removed(e.from) || removed(e.to)) edges_to_remove.push_back(eid);
    }

    std::sort(edges_to_remove.begin(), edges_to_remove.end());
    edges_to_remove.erase(std::unique(edges_to_remove.begin(), edges_to_remove.end()),
                          edges_to_remove.end());
    for (const EdgeId& eid : edges_to_remove) map.removeEdge(eid);
    for (const auto& c : composed) {
      Edge e;
      e.id = deriveId<EdgeId>(c.from.hi, c.from.lo, c.to.hi, c.to.lo, 0xC0390);
      e.from = c.from;
      e.to = c.to;
      OdometryEdge odo;
      odo.T_A_B = c.T;
      odo.covariance = c.cov;
      e.payload = odo;
      map.addEdge(e);
    }

    // Re-home or drop landmarks hosted by removed vertices, then remove them.
    std::set<VertexId> removed_set;
    for (std::size_t i = 0; i < chain.size(); ++i) {
      if (!keep[i]) removed_set.insert(chain[i]);
    }
    std::vector<LandmarkId> hosted;
    for (const auto& [lid, lm] : map.landmarks()) {
      if (removed_set.count(lm.host)) hosted.push_back(lid);
    }
    for (const LandmarkId& lid : hosted) {
      Landmark& lm = map.landmark(lid);
      VertexId new_host;
      std::int64_t best_time = std::numeric_limits<std::int64_t>::max();
      for (const auto& ref : lm.observations) {
        if (removed_set.count(ref.vertex)) continue;
        const std::int64_t t = map.vertex(ref.vertex).timestamp_ns;
        if (t < best_time || (t == best_time && ref.vertex < new_host)) {
          best_time = t;
          new_host = ref.vertex;
        }
      }
      if (new_host.isValid()) {
        lm.host = new_host;
      } else {
        map.removeLandmark(lid);
      }
    }
    for (const VertexId& vid : removed_set) {
      map.removeVertex(vid);
      ++report.removed_vertices;
    }
  }

  requireConsistent(map, "keyframeMap");
  return report;
}

namespace {

double angularSpread(const VIMap& map, const Landmark& lm) {
  std::vector<Eigen::Vector3d> rays;
  const MissionId host_mission = map.vertex(lm.host).mission;
  const Pose6 T_G_H = map.mission(host_mission).T_G_M;
  const Eigen::Vector3d p_G = T_G_H * lm.p_M;
  for (const auto& ref : lm.observations) {
    const Eigen::Vector3d c = map.globalPose(ref.vertex).t;
    if ((p_G - c).norm() > 0) rays.push_back((p_G - c).normalized());
  }
  double spread = 0.0;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    for (std::size_t j = i + 1; j < rays.size(); ++j) {
      spread = std::max(spread, std::acos(std::clamp(rays[i].dot(rays[j]), -1.0, 1.0)));
    }
  }
  return spread;
}

}  // namespace

SparsifyReport sparsifyLandmarks(VIMap& map, double keep_fraction, int min_per_vertex) {
  struct Ranked {
    LandmarkId id;
    int observers;
    double spread;
  };
  std::vector<Ranked> good;
  std::vector<LandmarkId> not_good;
  for (const auto& [lid, lm] : map.landmarks()) {
    if (lm.quality != LandmarkQuality::Good) {
      not_good.push_back(lid);
      continue;
    }
    std::set<VertexId> observers;
    for (const auto& ref : lm.observations) observers.insert(ref.vertex);
    good.push_back({lid, static_cast<int>(observers.size()), angularSpread(map, lm)});
  }
  std::sort(good.begin(), good.end(), [](const Ranked& a, const Ranked& b) {
    if (a.observers != b.observers) return a.observers > b.observers;
    if (a.spread != b.spread) return a.spread > b.spread;
    return a.id < b.id;
  });

  const std::size_t target =
      static_cast<std::size_t>(std::llround(keep_fraction * static_cast<double>(good.size())));
  std::set<LandmarkId> kept;
  for (std::size_t i = 0; i < std::min(target, good.size()); ++i) kept.insert(good[i].id);

  // Per-vertex floor: add next-best observed landmarks where a vertex fell
  // under the minimum.
  std::map<LandmarkId, std::size_t> rank_of;
  for (std::size_t i = 0; i < good.size(); ++i) rank_of[good[i].id] = i;
  for (const auto& [vid, v] : map.vertices()) {
    std::vector<LandmarkId> observed;
    for (const auto& frame : v.frames) {
      for (const auto& kp : frame.keypoints) {
        if (kp.landmark.isValid() && rank_of.count(kp.landmark)) observed.push_back(kp.landmark);
      }
    }
    std::sort(observed.begin(), observed.end());
    observed.erase(std::unique(observed.begin(), observed.end()), observed.end());
    int have = 0;
    for (const auto& lid : observed) {
      if (kept.count(lid)) ++have;
    }
    if (have >= min_per_vertex) continue;
    std::sort(observed.begin(), observed.end(), [&](const LandmarkId& a, const LandmarkId& b) {
      return rank_of.at(a) < rank_of.at(b);
    });
    for (const auto& lid : observed) {
      if (have >= min_per_vertex) break;
      if (kept.insert(lid).second) ++have;
    }
  }

  SparsifyReport report;
  for (const auto& r : good) {
    if (kept.count(r.id)) {
      ++report.kept;
    } else {
      map.removeLandmark(r.id);
      ++report.removed;
    }
  }
  for (const auto& lid : not_good) {
    map.removeLandmark(lid);
    ++report.removed;
  }
  requireConsistent(map, "sparsifyLandmarks");
  return report;
}

std::optional<ApeResult> evaluateApe(const Trajectory& estimate, const Trajectory& ground_truth,
                                     bool align) {
  constexpr double kMaxAssociationGap = 0.010;  // seconds

  std::vector<Eigen::Vector3d> est_points, gt_points;
  std::size_t cursor = 0;
  std::vector<TrajectoryPoint> gt_sorted = ground_truth;
  std::sort(gt_sorted.begin(), gt_sorted.end(),
            [](const TrajectoryPoint& a, const TrajectoryPoint& b) { return a.t < b.t; });
  for (const auto& e : estimate) {
    while (cursor + 1 < gt_sorted.size() &&
           std::abs(gt_sorted[cursor + 1].t - e.t) <= std::abs(gt_sorted[cursor].t - e.t)) {
      ++cursor;
    }
    if (gt_sorted.empty() || std::abs(gt_sorted[cursor].t - e.t) > kMaxAssociationGap) continue;
    est_points.push_back(e.pose.t);
    gt_points.push_back(gt_sorted[cursor].pose.t);
  }
  if (est_points.size() < 3) return std::nullopt;

  if (align) {
    const HornResult horn = hornAlign(est_points, gt_points);
    if (!horn.degenerate) {
      for (auto& p : est_points) p = horn.T_B_A * p;
    }
  }

  double sum_sq = 0.0;
  for (std::size_t i = 0; i < est_points.size(); ++i) {
    sum_sq += (est_points[i] - gt_points[i]).squaredNorm();
  }
  ApeResult result;
  result.associated_pairs = static_cast<int>(est_points.size());
  result.rmse = std::sqrt(sum_sq / static_cast<double>(est_points.size()));
  return result;
}

}  // namespace atlas
