#include "atlas/semantics.h"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "atlas/bytes.h"
#include "atlas/config.h"
#include "atlas/horn.h"
#include "atlas/landmark_quality.h"
#include "atlas/triangulation.h"

namespace atlas {

std::vector<SemanticObservation> parseSemanticCsv(const std::string& csv_text) {
  std::vector<SemanticObservation> out;
  std::istringstream in(csv_text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trimString(line);
    if (line.empty() || line[0] == '#' || line.rfind("track_id", 0) == 0) continue;
    const auto fields = splitString(line, ',');
    if (fields.size() != 8) {
      throw std::invalid_argument("semantic csv line " + std::to_string(line_no) +
                                  ": expected 8 fields");
    }
    SemanticObservation obs;
    obs.track_id = std::stoll(fields[0]);
    obs.vertex = VertexId::fromHex(trimString(fields[1]));
    obs.camera = CameraId::fromHex(trimString(fields[2]));
    obs.class_label = std::stoi(fields[3]);
    obs.p_C = Eigen::Vector3d(std::stod(fields[4]), std::stod(fields[5]), std::stod(fields[6]));
    obs.descriptor = bytesToFloats(hexDecode(trimString(fields[7])));
    if (obs.class_label < 0) {
      throw std::invalid_argument("semantic csv line " + std::to_string(line_no) +
                                  ": negative class");
    }
    out.push_back(std::move(obs));
  }
  return out;
}

std::vector<LandmarkId> ingestSemanticTracks(
    VIMap& map, const std::vector<SemanticObservation>& observations) {
  std::map<std::int64_t, std::vector<const SemanticObservation*>> tracks;
  for (const auto& obs : observations) tracks[obs.track_id].push_back(&obs);

  // Register the semantic feature type from the first observation's width.
  if (!observations.empty() && !map.featureTypes().count(kSemanticFeatureType)) {
    FeatureTypeConfig ft;
    ft.feature_type_id = kSemanticFeatureType;
    ft.descriptor_kind = DescriptorKind::Float;
    ft.descriptor_size = static_cast<int>(observations.front().descriptor.size());
    ft.match_threshold = 2.0;
    ft.lowe_ratio = 1.0;
    map.setFeatureType(ft);
  }

  std::vector<LandmarkId> created;
  for (const auto& [track_id, obs_list] : tracks) {
    const int class_label = obs_list.front()->class_label;
    for (const auto* obs : obs_list) {
      if (obs->class_label != class_label) {
        throw std::invalid_argument("semantic track " + std::to_string(track_id) +
                                    " mixes classes");
      }
    }

    // Mean descriptor, renormalized.
    std::vector<float> mean(obs_list.front()->descriptor.size(), 0.0f);
    for (const auto* obs : obs_list) {
      if (obs->descriptor.size() != mean.size()) {
        throw std::invalid_argument("semantic track " + std::to_string(track_id) +
                                    " has inconsistent descriptor widths");
      }
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += obs->descriptor[i];
    }
    double norm = 0.0;
    for (const float x : mean) norm += static_cast<double>(x) * x;
    norm = std::sqrt(std::max(norm, 1e-12));
    for (auto& x : mean) x = static_cast<float>(x / norm);

    // Insert keypoints (pixel = projected center, depth = z).
    std::vector<KeypointRef> refs;
    for (const auto* obs : obs_list) {
      Vertex& v = map.vertex(obs->vertex);
      const CameraConfig& cam = map.camera(obs->camera);
      std::uint32_t frame_index = 0;
      bool found = false;
      for (; frame_index < v.frames.size(); ++frame_index) {
        if (v.frames[frame_index].camera == obs->camera) {
          found = true;
          break;
        }
      }
      if (!found) {
        VisualFrame frame;
        frame.camera = obs->camera;
        v.frames.push_back(frame);
        frame_index = static_cast<std::uint32_t>(v.frames.size() - 1);
      }
      Keypoint kp;
      kp.uv = projectToPixel(obs->p_C, cam.fx, cam.fy, cam.cx, cam.cy);
      kp.depth = obs->p_C.z();
      kp.feature_type = kSemanticFeatureType;
      kp.track_id = track_id;
      kp.descriptor = floatsToBytes(obs->descriptor);
      v.frames[frame_index].keypoints.push_back(kp);
      refs.push_back({obs->vertex, frame_index,
                      static_cast<std::uint32_t>(v.frames[frame_index].keypoints.size() - 1)});
    }

    std::sort(refs.begin(), refs.end(), [&](const KeypointRef& a, const KeypointRef& b) {
      const auto ta = map.vertex(a.vertex).timestamp_ns;
      const auto tb = map.vertex(b.vertex).timestamp_ns;
      if (ta != tb) return ta < tb;
      return a < b;
    });

    Landmark lm;
    lm.id = deriveId<LandmarkId>(static_cast<std::uint64_t>(track_id), refs.front().vertex.hi,
                                 refs.front().vertex.lo, obs_list.size(), 0x5E3A);
    lm.host = refs.front().vertex;
    lm.kind = LandmarkKind::Averaged3D;
    lm.class_label = class_label;
    lm.feature_type = kSemanticFeatureType;
    lm.descriptor = floatsToBytes(mean);
    lm.observations = refs;
    map.addLandmark(lm);

    Landmark& stored = map.landmark(lm.id);
    const TriangulationResult init = retriangulateLandmark(map, stored);
    if (init.ok()) {
      stored.p_M = init.position;
      stored.quality = evaluateLandmarkQuality(map, stored);
    } else {
      stored.quality = LandmarkQuality::Bad;
    }
    created.push_back(lm.id);
  }
  return created;
}

namespace {

double cosineSimilarity(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  const auto fa = bytesToFloats(a);
  const auto fb = bytesToFloats(b);
  if (fa.size() != fb.size() || fa.empty()) return -1.0;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    dot += static_cast<double>(fa[i]) * fb[i];
    na += static_cast<double>(fa[i]) * fa[i];
    nb += static_cast<double>(fb[i]) * fb[i];
  }
  if (na <= 0.0 || nb <= 0.0) return -1.0;
  return dot / std::sqrt(na * nb);
}

// (vertex, frame) pairs observing a landmark.
std::set<std::pair<VertexId, std::uint32_t>> imagesOf(const Landmark& lm) {
  std::set<std::pair<VertexId, std::uint32_t>> out;
  for (const auto& ref : lm.observations) out.emplace(ref.vertex, ref.frame);
  return out;
}

std::vector<LandmarkId> semanticLandmarksOfMission(const VIMap& map, const MissionId& mission) {
  std::vector<LandmarkId> out;
  for (const auto& [lid, lm] : map.landmarks()) {
    if (lm.class_label < 0 || lm.feature_type != kSemanticFeatureType) continue;
    if (map.vertex(lm.host).mission != mission) continue;
    out.push_back(lid);
  }
  return out;
}

}  // namespace

std::vector<std::pair<LandmarkId, LandmarkId>> matchSemanticLandmarks(
    const VIMap& map, const MissionId& query_mission, const MissionId& target_mission,
    const SemanticMatchOptions& options) {
  const auto query_lms = semanticLandmarksOfMission(map, query_mission);
  const auto target_lms = semanticLandmarksOfMission(map, target_mission);
  const bool same_mission = query_mission == target_mission;

  auto sharesImage = [&](const LandmarkId& a, const LandmarkId& b) {
    const auto images_a = imagesOf(map.landmark(a));
    const auto images_b = imagesOf(map.landmark(b));
    for (const auto& img : images_a) {
      if (images_b.count(img)) return true;
    }
    return false;
  };

  // Unique-visibility applies up front: co-imaged landmarks never match.
  auto bestMatch = [&](const LandmarkId& from, const std::vector<LandmarkId>& pool)
      -> std::optional<LandmarkId> {
    const Landmark& a = map.landmark(from);
    double best_sim = options.min_cosine_similarity;
    std::optional<LandmarkId> best;
    for (const LandmarkId& candidate : pool) {
      if (candidate == from) continue;
      const Landmark& b = map.landmark(candidate);
      if (b.class_label != a.class_label) continue;
      if (sharesImage(from, candidate)) continue;
      const double sim = cosineSimilarity(a.descriptor, b.descriptor);
      if (sim > best_sim || (sim == best_sim && best.has_value() && candidate < *best)) {
        best_sim = sim;
        best = candidate;
      }
    }
    return best;
  };

  auto firstObservationTime = [&](const LandmarkId& lid) {
    std::int64_t t = std::numeric_limits<std::int64_t>::max();
    for (const auto& ref : map.landmark(lid).observations) {
      t = std::min(t, map.vertex(ref.vertex).timestamp_ns);
    }
    return t;
  };

  std::vector<std::pair<LandmarkId, LandmarkId>> pairs;
  for (const LandmarkId& q : query_lms) {
    const auto t = bestMatch(q, target_lms);
    if (!t.has_value()) continue;
    const auto back = bestMatch(*t, query_lms);
    if (!back.has_value() || *back != q) continue;  // mutual best
    if (same_mission) {
      // Canonical direction: the later pass queries against the earlier one.
      if (firstObservationTime(q) < firstObservationTime(*t)) continue;
    }
    pairs.emplace_back(q, *t);
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  return pairs;
}

std::vector<LoopClosureResult> detectSemanticLoopClosures(const VIMap& map,
                                                          const SemanticLcOptions& options) {
  std::vector<LoopClosureResult> results;
  std::vector<MissionId> missions;
  for (const auto& [mid, m] : map.missions()) missions.push_back(mid);

  for (std::size_t ti = 0; ti < missions.size(); ++ti) {
    for (std::size_t qi = ti; qi < missions.size(); ++qi) {
      const MissionId target = missions[ti];
      const MissionId query = missions[qi];
      const auto pairs = matchSemanticLandmarks(map, query, target, options.match);
      if (static_cast<int>(pairs.size()) < options.min_cluster) continue;

      // Cluster the matched query-side landmarks by covisibility first; the
      // rigid-transform assumption only holds locally once odometry drift
      // accumulates, so geometric verification runs per cluster.
      std::vector<LandmarkId> query_side;
      for (const auto& [q, t] : pairs) query_side.push_back(q);
      for (const auto& cluster : covisibilityComponents(map, query_side)) {
        if (static_cast<int>(cluster.size()) < options.min_cluster) continue;
        const std::set<LandmarkId> members(cluster.begin(), cluster.end());

        std::vector<Correspondence3D3D> correspondences;
        std::vector<std::pair<LandmarkId, LandmarkId>> member_pairs;
        for (const auto& [q, t] : pairs) {
          if (!members.count(q)) continue;
          correspondences.push_back({map.landmark(q).p_M, map.landmark(t).p_M});
          member_pairs.emplace_back(q, t);
        }
        if (static_cast<int>(member_pairs.size()) < options.min_cluster) continue;

        RansacOptions ransac_opts = options.ransac;
        ransac_opts.min_inliers = options.min_cluster;
        ransac_opts.min_inlier_fraction = 0.0;
        ransac_opts.seed = splitmix64(options.ransac.seed ^ target.lo ^ (query.lo << 1) ^
                                      cluster.front().lo);
        const auto verified =
            ransac3d3d(correspondences, options.inlier_threshold_m, ransac_opts);
        if (!verified.has_value()) continue;

        std::vector<Eigen::Vector3d> points_q, points_t;
        std::vector<std::pair<LandmarkId, LandmarkId>> cluster_pairs;
        for (const int idx : verified->inliers) {
          points_q.push_back(correspondences[idx].p_a);
          points_t.push_back(correspondences[idx].p_b);
          cluster_pairs.push_back(member_pairs[idx]);
        }

        // Vertices closest to the cluster centroids, picked from the
        // clusters' own observers so each side stays on its own pass.
        Eigen::Vector3d centroid_q = Eigen::Vector3d::Zero();
        Eigen::Vector3d centroid_t = Eigen::Vector3d::Zero();
        for (const auto& p : points_q) centroid_q += p;
        for (const auto& p : points_t) centroid_t += p;
        centroid_q /= static_cast<double>(points_q.size());
        centroid_t /= static_cast<double>(points_t.size());
        auto nearestObserver = [&](const std::vector<LandmarkId>& side,
                                   const Eigen::Vector3d& c) {
          VertexId best;
          double best_d = std::numeric_limits<double>::max();
          for (const LandmarkId& lid : side) {
            for (const auto& ref : map.landmark(lid).observations) {
              const double d = (map.vertex(ref.vertex).T_M_I.t - c).norm();
              if (d < best_d || (d == best_d && ref.vertex < best)) {
                best_d = d;
                best = ref.vertex;
              }
            }
          }
          return best;
        };
        std::vector<LandmarkId> side_q, side_t;
        for (const auto& [q, t] : cluster_pairs) {
          side_q.push_back(q);
          side_t.push_back(t);
        }
        LoopClosureResult result;
        result.vertex_a = nearestObserver(side_t, centroid_t);
        result.vertex_b = nearestObserver(side_q, centroid_q);
        if (!result.vertex_a.isValid() || !result.vertex_b.isValid()) continue;
        if (result.vertex_a == result.vertex_b) continue;

        // Align the clusters in the frames of the chosen vertices. Whatever
        // drift the two passes accumulated globally cancels; only the local
        // inconsistency within the observation windows remains.
        const Pose6 T_I_Mt = map.vertex(result.vertex_a).T_M_I.inverse();
        const Pose6 T_I_Mq = map.vertex(result.vertex_b).T_M_I.inverse();
        std::vector<Eigen::Vector3d> local_q, local_t;
        for (std::size_t i = 0; i < points_q.size(); ++i) {
          local_q.push_back(T_I_Mq * points_q[i]);
          local_t.push_back(T_I_Mt * points_t[i]);
        }
        const HornResult horn = hornAlign(local_q, local_t);
        if (horn.degenerate) continue;

        result.mission_a = target;
        result.mission_b = query;
        result.method = LoopClosureMethod::Semantic;
        result.T_A_B = horn.T_B_A;  // maps vertex_b-frame points into vertex_a's
        result.inlier_ratio = verified->inlier_ratio;
        result.merge_pairs = cluster_pairs;
        for (const auto& [q, t] : cluster_pairs) {
          result.inlier_matches.push_back({{}, t, 0.0});
        }

        // First-order covariance from isotropic point noise through the
        // alignment, floored at the visual loop-closure default. The assumed
        // noise never drops below the observed alignment residual, which is
        // what actually bounds the consistency of the two instances.
        const double sigma_point = std::max(options.sigma_point, horn.rms);
        Matrix6d cov = hornAlignCovariance(local_q, horn.T_B_A, sigma_point);
        const Matrix6d floor_cov = loopClosureCovariance(LoopClosureMethod::Visual, options.lc);
        for (int i = 0; i < 6; ++i) {
          if (cov(i, i) < floor_cov(i, i)) {
            cov(i, i) = floor_cov(i, i);
          }
        }
        result.covariance = cov;
        results.push_back(std::move(result));
      }
    }
  }
  return results;
}

SemanticLcReport runSemanticLoopClosure(VIMap& map, const SemanticLcOptions& options) {
  SemanticLcReport report;
  ensureAnchor(map);
  const auto results = detectSemanticLoopClosures(map, options);
  report.clusters = static_cast<int>(results.size());
  anchorMissionsFromResults(map, results);
  for (const auto& r : results) {
    if (!map.mission(r.mission_a).baseframe_known || !map.mission(r.mission_b).baseframe_known) {
      continue;
    }
    const CommitReport c = commitLoopClosure(map, r, CommitMode::Edge);
    report.commit.edges_added += c.edges_added;
    report.commit.duplicates_skipped += c.duplicates_skipped;
  }
  return report;
}

}  // namespace atlas
