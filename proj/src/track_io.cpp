#include "atlas/track_io.h"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "atlas/bytes.h"
#include "atlas/config.h"
#include "atlas/triangulation.h"

namespace atlas {

namespace {

struct TrackRow {
  std::int64_t track_id;
  VertexId vertex;
  CameraId camera;
  Keypoint keypoint;
};

}  // namespace

std::vector<LandmarkId> ingestFeatureTracks(VIMap& map, const std::string& csv_text) {
  std::istringstream in(csv_text);
  std::string line;
  std::vector<TrackRow> rows;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trimString(line);
    if (line.empty() || line[0] == '#' || line.rfind("track_id", 0) == 0) continue;
    const auto fields = splitString(line, ',');
    if (fields.size() != 8) {
      throw std::invalid_argument("track csv line " + std::to_string(line_no) +
                                  ": expected 8 fields");
    }
    TrackRow row;
    row.track_id = std::stoll(fields[0]);
    row.vertex = VertexId::fromHex(trimString(fields[1]));
    row.camera = CameraId::fromHex(trimString(fields[2]));
    row.keypoint.uv.x() = std::stod(fields[3]);
    row.keypoint.uv.y() = std::stod(fields[4]);
    const std::string depth = trimString(fields[5]);
    row.keypoint.depth = depth.empty() ? -1.0 : std::stod(depth);
    row.keypoint.feature_type = std::stoi(fields[6]);
    row.keypoint.descriptor = hexDecode(trimString(fields[7]));
    row.keypoint.track_id = row.track_id;
    if (!map.hasVertex(row.vertex)) {
      throw std::invalid_argument("track csv line " + std::to_string(line_no) +
                                  ": unknown vertex " + fields[1]);
    }
    rows.push_back(std::move(row));
  }

  // Insert keypoints and remember the refs per track.
  std::map<std::int64_t, std::vector<KeypointRef>> tracks;
  for (const TrackRow& row : rows) {
    Vertex& v = map.vertex(row.vertex);
    std::uint32_t frame_index = 0;
    bool found = false;
    for (; frame_index < v.frames.size(); ++frame_index) {
      if (v.frames[frame_index].camera == row.camera) {
        found = true;
        break;
      }
    }
    if (!found) {
      map.camera(row.camera);  // validates existence
      VisualFrame frame;
      frame.camera = row.camera;
      v.frames.push_back(frame);
      frame_index = static_cast<std::uint32_t>(v.frames.size() - 1);
    }
    v.frames[frame_index].keypoints.push_back(row.keypoint);
    tracks[row.track_id].push_back(
        {row.vertex, frame_index,
         static_cast<std::uint32_t>(v.frames[frame_index].keypoints.size() - 1)});
  }

  std::vector<LandmarkId> created;
  for (auto& [track_id, refs] : tracks) {
    std::sort(refs.begin(), refs.end(), [&](const KeypointRef& a, const KeypointRef& b) {
      const auto ta = map.vertex(a.vertex).timestamp_ns;
      const auto tb = map.vertex(b.vertex).timestamp_ns;
      if (ta != tb) return ta < tb;
      return a < b;
    });

    bool all_depth = true;
    for (const auto& ref : refs) {
      if (!map.keypoint(ref).hasDepth()) {
        all_depth = false;
        break;
      }
    }

    Landmark lm;
    const VertexId host = refs.front().vertex;
    lm.id = deriveId<LandmarkId>(static_cast<std::uint64_t>(track_id), host.hi, host.lo,
                                 refs.size(), 0x7124C5);
    lm.host = host;
    lm.kind = all_depth ? LandmarkKind::Averaged3D : LandmarkKind::Triangulated;
    const Keypoint& first_kp = map.keypoint(refs.front());
    lm.feature_type = first_kp.feature_type;
    lm.descriptor = first_kp.descriptor;
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

std::vector<LandmarkId> ingestFeatureTracksFile(VIMap& map, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open track csv " + path);
  std::ostringstream oss;
  oss << in.rdbuf();
  return ingestFeatureTracks(map, oss.str());
}

}  // namespace atlas
