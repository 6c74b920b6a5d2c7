#include "atlas/loop_closure.h"

#include <algorithm>
#include <map>
#include <set>

#include "atlas/descriptor_index.h"

namespace atlas {

LoopClosureOptions LoopClosureOptions::fromConfig(const Config& config) {
  LoopClosureOptions o;
  o.knn = config.getInt("lc.knn", o.knn);
  o.min_cluster = config.getInt("lc.min_cluster", o.min_cluster);
  o.min_time_gap_ns = static_cast<std::int64_t>(
      config.getDouble("lc.min_time_gap_s", static_cast<double>(o.min_time_gap_ns) * 1e-9) * 1e9);
  o.ransac.max_iterations = config.getInt("lc.ransac_max_iterations", o.ransac.max_iterations);
  o.ransac.confidence = config.getDouble("lc.ransac_confidence", o.ransac.confidence);
  o.ransac.seed = config.getUint64("seed", o.ransac.seed);
  o.ransac.min_inliers = config.getInt("lc.min_inliers", o.ransac.min_inliers);
  o.ransac.min_inlier_fraction =
      config.getDouble("lc.min_inlier_fraction", o.ransac.min_inlier_fraction);
  o.visual_sigma_translation =
      config.getDouble("lc.visual_sigma_translation", o.visual_sigma_translation);
  o.visual_sigma_rotation_deg =
      config.getDouble("lc.visual_sigma_rotation_deg", o.visual_sigma_rotation_deg);
  o.icp_sigma_translation = config.getDouble("lc.icp_sigma_translation", o.icp_sigma_translation);
  o.icp_sigma_rotation_deg =
      config.getDouble("lc.icp_sigma_rotation_deg", o.icp_sigma_rotation_deg);
  o.switch_prior_sigma = config.getDouble("lc.switch_prior_sigma", o.switch_prior_sigma);
  o.mode = config.getString("lc.mode", "edge") == "merge" ? CommitMode::Merge : CommitMode::Edge;
  return o;
}

Matrix6d loopClosureCovariance(LoopClosureMethod method, const LoopClosureOptions& options) {
  double sigma_t = options.visual_sigma_translation;
  double sigma_r_deg = options.visual_sigma_rotation_deg;
  if (method == LoopClosureMethod::Icp) {
    sigma_t = options.icp_sigma_translation;
    sigma_r_deg = options.icp_sigma_rotation_deg;
  }
  const double sigma_r = sigma_r_deg * M_PI / 180.0;
  Matrix6d cov = Matrix6d::Identity();
  cov.topLeftCorner<3, 3>() *= sigma_r * sigma_r;
  cov.bottomRightCorner<3, 3>() *= sigma_t * sigma_t;
  return cov;
}

namespace {

struct QueryGroupKey {
  VertexId vertex;
  std::uint32_t frame;
  MissionId target_mission;

  auto operator<=>(const QueryGroupKey&) const = default;
};

// Observers of a landmark restricted to one mission.
std::set<VertexId> observersInMission(const VIMap& map, const Landmark& lm,
                                      const MissionId& mission) {
  std::set<VertexId> out;
  for (const auto& ref : lm.observations) {
    if (map.vertex(ref.vertex).mission == mission) out.insert(ref.vertex);
  }
  return out;
}

bool nearInTime(const VIMap& map, const Landmark& lm, const Vertex& query,
                std::int64_t gap_ns) {
  for (const auto& ref : lm.observations) {
    const Vertex& observer = map.vertex(ref.vertex);
    if (observer.mission != query.mission) continue;
    if (std::abs(observer.timestamp_ns - query.timestamp_ns) < gap_ns) return true;
  }
  return false;
}

}  // namespace

std::vector<LoopClosureResult> detectLoopClosures(const VIMap& map,
                                                  const LoopClosureOptions& options) {
  std::vector<LoopClosureResult> results;

  for (const auto& [ft_id, ft] : map.featureTypes()) {
    // Index the Good landmarks of this feature type by representative descriptor.
    DescriptorIndex index(ft);
    int indexed = 0;
    for (const auto& [lid, lm] : map.landmarks()) {
      if (lm.quality != LandmarkQuality::Good) continue;
      if (lm.feature_type != ft_id || lm.descriptor.size() != ft.descriptorByteWidth()) continue;
      index.insert(lid, lm.descriptor);
      ++indexed;
    }
    if (indexed == 0) continue;
    index.build();

    // Candidate matches per query vertex.
    std::map<QueryGroupKey, std::vector<CandidateMatch>> groups;
    for (const auto& [vid, vertex] : map.vertices()) {
      std::vector<std::vector<std::uint8_t>> queries;
      std::vector<KeypointRef> refs;
      for (std::uint32_t f = 0; f < vertex.frames.size(); ++f) {
        const VisualFrame& frame = vertex.frames[f];
        for (std::uint32_t k = 0; k < frame.keypoints.size(); ++k) {
          const Keypoint& kp = frame.keypoints[k];
          if (kp.feature_type != ft_id || kp.descriptor.size() != ft.descriptorByteWidth()) {
            continue;
          }
          queries.push_back(kp.descriptor);
          refs.push_back({vid, f, k});
        }
      }
      if (queries.empty()) continue;
      // Extra neighbors get fetched so the ratio test still has a runner-up
      // after excluding the query's own landmark and anything tracked nearby
      // in time (a revisited landmark exists in the index once per pass).
      const auto matches = index.knnBatch(queries, options.knn + 4, true);
      for (std::size_t i = 0; i < refs.size(); ++i) {
        const Keypoint& kp = map.keypoint(refs[i]);
        std::vector<DescriptorMatch> usable;
        for (const DescriptorMatch& m : matches[i]) {
          if (kp.landmark.isValid() && kp.landmark == m.landmark) continue;
          if (nearInTime(map, map.landmark(m.landmark), vertex, options.min_time_gap_ns)) {
            continue;
          }
          usable.push_back(m);
        }
        const auto gated = applyRatioGate(std::move(usable), ft.lowe_ratio);
        if (gated.empty()) continue;
        const DescriptorMatch& best = gated.front();
        const MissionId target = map.vertex(map.landmark(best.landmark).host).mission;
        groups[{vid, refs[i].frame, target}].push_back({refs[i], best.landmark, best.distance});
      }
    }

    for (const auto& [key, candidates] : groups) {
      const auto filtered = covisibilityFilter(map, candidates, options.min_cluster);
      if (static_cast<int>(filtered.size()) < 4) continue;

      const Vertex& query_vertex = map.vertex(key.vertex);
      const VisualFrame& frame = query_vertex.frames[key.frame];
      const CameraConfig& cam = map.camera(frame.camera);
      PinholeIntrinsics intrinsics{cam.fx, cam.fy, cam.cx, cam.cy};

      std::vector<Correspondence2D3D> correspondences;
      correspondences.reserve(filtered.size());
      for (const auto& c : filtered) {
        Correspondence2D3D m;
        m.uv = map.keypoint(c.query).uv;
        m.point = map.landmark(c.landmark).p_M;
        correspondences.push_back(m);
      }

      RansacOptions ransac_opts = options.ransac;
      ransac_opts.seed =
          splitmix64(options.ransac.seed ^ key.vertex.hi ^ key.vertex.lo ^ key.target_mission.lo);
      const auto ransac =
          ransacP3p(correspondences, intrinsics, ft.ransac_pixel_threshold, ransac_opts);
      if (!ransac.has_value()) continue;

      LoopClosureResult result;
      result.vertex_b = key.vertex;
      result.mission_b = query_vertex.mission;
      result.mission_a = key.target_mission;
      result.method = LoopClosureMethod::Visual;
      result.inlier_ratio = ransac->inlier_ratio;
      result.covariance = loopClosureCovariance(LoopClosureMethod::Visual, options);

      // Representative vertex: observes the most inlier landmarks.
      std::map<VertexId, int> observer_votes;
      for (const int idx : ransac->inliers) {
        const CandidateMatch& c = filtered[idx];
        result.inlier_matches.push_back(c);
        result.descriptor_distance_sum += c.distance;
        const Landmark& lm = map.landmark(c.landmark);
        for (const VertexId& obs : observersInMission(map, lm, key.target_mission)) {
          observer_votes[obs] += 1;
        }
        const Keypoint& kp = map.keypoint(c.query);
        if (kp.landmark.isValid() && kp.landmark != c.landmark) {
          result.merge_pairs.emplace_back(kp.landmark, c.landmark);
        }
      }
      if (observer_votes.empty()) continue;
      const auto best_observer =
          std::max_element(observer_votes.begin(), observer_votes.end(),
                           [](const auto& a, const auto& b) { return a.second < b.second; });
      result.vertex_a = best_observer->first;

      // P3P gives the query body pose in the target mission frame.
      const Pose6 T_Mt_B = ransac->transform * cam.T_I_C.inverse();
      const Pose6 T_Mt_A = map.vertex(result.vertex_a).T_M_I;
      result.T_A_B = T_Mt_A.inverse() * T_Mt_B;
      results.push_back(std::move(result));
    }
  }
  return results;
}

CommitReport commitLoopClosure(VIMap& map, const LoopClosureResult& result, CommitMode mode) {
  CommitReport report;
  if (mode == CommitMode::Merge) {
    for (const auto& [query_lm, target_lm] : result.merge_pairs) {
      if (!map.hasLandmark(query_lm) || !map.hasLandmark(target_lm)) continue;
      if (query_lm == target_lm) continue;
      const LandmarkId survivor = std::min(query_lm, target_lm);
      const LandmarkId victim = std::max(query_lm, target_lm);
      map.mergeLandmarks(survivor, victim);
      ++report.landmarks_merged;
    }
    return report;
  }

  // Duplicate: same vertex pair (unordered) and method.
  for (const auto& [eid, edge] : map.edges()) {
    const auto* lc = std::get_if<LoopClosureEdge>(&edge.payload);
    if (!lc || lc->method != result.method) continue;
    const bool same_pair = (edge.from == result.vertex_a && edge.to == result.vertex_b) ||
                           (edge.from == result.vertex_b && edge.to == result.vertex_a);
    if (same_pair) {
      ++report.duplicates_skipped;
      return report;
    }
  }

  Edge edge;
  edge.id = deriveId<EdgeId>(result.vertex_a.hi, result.vertex_a.lo, result.vertex_b.hi,
                             result.vertex_b.lo, 0x10C0 + static_cast<int>(result.method));
  edge.from = result.vertex_a;
  edge.to = result.vertex_b;
  LoopClosureEdge lc;
  lc.T_A_B = result.T_A_B;
  lc.covariance = result.covariance;
  lc.switch_value = 1.0;
  lc.method = result.method;
  edge.payload = lc;
  map.addEdge(edge);
  ++report.edges_added;
  return report;
}

void ensureAnchor(VIMap& map) {
  if (map.firstAnchoredMission().has_value()) return;
  if (map.missions().empty()) return;
  Mission& first = map.mission(map.missions().begin()->first);
  first.T_G_M = Pose6::identity();
  first.baseframe_known = true;
}

std::vector<MissionId> anchorMissionsFromResults(VIMap& map,
                                                 const std::vector<LoopClosureResult>& results) {
  std::vector<MissionId> anchored;
  bool progress = true;
  while (progress) {
    progress = false;
    // Best anchoring candidate per unanchored mission.
    std::map<MissionId, const LoopClosureResult*> best;
    for (const auto& r : results) {
      const bool a_known = map.mission(r.mission_a).baseframe_known;
      const bool b_known = map.mission(r.mission_b).baseframe_known;
      if (a_known == b_known) continue;
      const MissionId target = a_known ? r.mission_b : r.mission_a;
      const auto it = best.find(target);
      if (it == best.end()) {
        best[target] = &r;
        continue;
      }
      const std::size_t have = it->second->inlier_matches.size();
      const std::size_t got = r.inlier_matches.size();
      if (got > have ||
          (got == have && r.descriptor_distance_sum < it->second->descriptor_distance_sum)) {
        it->second = &r;
      }
    }
    for (const auto& [mission_id, r] : best) {
      const bool a_known = map.mission(r->mission_a).baseframe_known;
      // T_G_B = T_G_A(known side) through the measured relative pose.
      const Pose6 T_G_A = map.mission(r->mission_a).T_G_M * map.vertex(r->vertex_a).T_M_I;
      const Pose6 T_G_B_meas = a_known
                                   ? T_G_A * r->T_A_B
                                   : Pose6();  // placeholder, handled below
      Mission& target = map.mission(mission_id);
      if (a_known) {
        target.T_G_M = T_G_B_meas * map.vertex(r->vertex_b).T_M_I.inverse();
      } else {
        const Pose6 T_G_B = map.mission(r->mission_b).T_G_M * map.vertex(r->vertex_b).T_M_I;
        const Pose6 T_G_A_meas = T_G_B * r->T_A_B.inverse();
        target.T_G_M = T_G_A_meas * map.vertex(r->vertex_a).T_M_I.inverse();
      }
      target.baseframe_known = true;
      anchored.push_back(mission_id);
      progress = true;
    }
  }
  return anchored;
}

LoopClosureReport runLoopClosure(VIMap& map, const LoopClosureOptions& options) {
  LoopClosureReport report;
  ensureAnchor(map);
  const auto results = detectLoopClosures(map, options);
  report.results = static_cast<int>(results.size());
  report.newly_anchored = anchorMissionsFromResults(map, results);
  for (const auto& r : results) {
    if (!map.mission(r.mission_a).baseframe_known || !map.mission(r.mission_b).baseframe_known) {
      ++report.commit.deferred_unanchored;
      continue;
    }
    const CommitReport c = commitLoopClosure(map, r, options.mode);
    report.commit.edges_added += c.edges_added;
    report.commit.duplicates_skipped += c.duplicates_skipped;
    report.commit.landmarks_merged += c.landmarks_merged;
  }
  return report;
}

}  // namespace atlas
