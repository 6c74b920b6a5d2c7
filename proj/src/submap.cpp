#include "atlas/submap.h"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include "atlas/serialization.h"

namespace atlas {

std::vector<Submap> splitIntoSubmaps(const VIMap& map, int interval,
                                     const std::string& robot_id) {
  if (interval < 1) throw std::invalid_argument("splitIntoSubmaps: interval must be >= 1");
  if (map.missions().size() != 1) {
    throw std::invalid_argument("splitIntoSubmaps: map must contain exactly one mission");
  }
  const MissionId mission_id = map.missions().begin()->first;
  const auto chain = map.missionVertexChain(mission_id);
  if (chain.empty()) return {};

  // Chain position lookup for edge assignment.
  std::map<VertexId, int> position;
  for (std::size_t i = 0; i < chain.size(); ++i) position[chain[i]] = static_cast<int>(i);

  const int n = static_cast<int>(chain.size());
  const int chunk_count = std::max(1, (n + interval - 1) / interval);

  std::vector<Submap> out;
  for (int c = 0; c < chunk_count; ++c) {
    const int begin = c * interval;
    const int end = std::min(n, begin + interval);
    if (begin >= n) break;

    Submap submap;
    submap.robot_id = robot_id;
    submap.sequence_number = static_cast<std::uint32_t>(c);
    submap.boundary_vertex = chain[end - 1];

    std::set<VertexId> members;
    const int with_boundary_begin = c == 0 ? begin : begin - 1;
    for (int i = with_boundary_begin; i < end; ++i) members.insert(chain[i]);

    VIMap& chunk = submap.chunk;
    chunk.addMission(map.mission(mission_id));
    for (const auto& [id, ft] : map.featureTypes()) chunk.setFeatureType(ft);
    for (const auto& [id, cam] : map.cameras()) chunk.setCamera(cam);
    for (const VertexId& vid : members) chunk.addVertex(map.vertex(vid));
    for (const VertexId& vid : members) {
      if (const auto* blob = map.attachment(vid)) chunk.setAttachment(vid, *blob);
    }

    // An edge belongs to the chunk of its later endpoint; the duplicated
    // boundary vertex keeps consecutive edges intact.
    for (const auto& [eid, edge] : map.edges()) {
      const int from_pos = position.at(edge.from);
      int later = from_pos;
      if (!std::holds_alternative<AbsolutePoseEdge>(edge.payload)) {
        later = std::max(from_pos, position.at(edge.to));
      }
      if (later < with_boundary_begin + (c == 0 ? 0 : 1) || later >= end) continue;
      if (!members.count(edge.from) ||
          (!std::holds_alternative<AbsolutePoseEdge>(edge.payload) && !members.count(edge.to))) {
        throw std::invalid_argument(
            "splitIntoSubmaps: edge spans non-adjacent chunks; split the map before adding "
            "long-range edges");
      }
      chunk.addEdge(edge);
      if (const auto* samples = map.imuSamples(eid)) chunk.setImuSamples(eid, *samples);
    }

    // Landmark instances carry only the in-chunk observations; the host
    // falls back to the earliest in-chunk observer when absent.
    for (const auto& [lid, lm] : map.landmarks()) {
      std::vector<KeypointRef> local;
      for (const auto& ref : lm.observations) {
        if (members.count(ref.vertex)) local.push_back(ref);
      }
      if (local.empty()) continue;
      Landmark instance = lm;
      instance.observations = local;
      if (!members.count(instance.host)) {
        std::sort(local.begin(), local.end(), [&](const KeypointRef& a, const KeypointRef& b) {
          const auto ta = map.vertex(a.vertex).timestamp_ns;
          const auto tb = map.vertex(b.vertex).timestamp_ns;
          if (ta != tb) return ta < tb;
          return a < b;
        });
        instance.host = local.front().vertex;
      }
      chunk.addLandmark(instance);
    }

    out.push_back(std::move(submap));
  }
  return out;
}

void concatenateSubmap(VIMap& global_map, const Submap& submap) {
  const VIMap& chunk = submap.chunk;
  if (chunk.missions().size() != 1) {
    throw std::invalid_argument("concatenateSubmap: chunk must contain exactly one mission");
  }
  const MissionId mission_id = chunk.missions().begin()->first;

  if (submap.sequence_number > 0) {
    if (!global_map.hasVertex(submap.chunk.missionVertexChain(mission_id).front())) {
      throw std::invalid_argument("concatenateSubmap: boundary vertex missing from global map");
    }
  }

  for (const auto& [id, ft] : chunk.featureTypes()) {
    if (!global_map.featureTypes().count(id)) global_map.setFeatureType(ft);
  }
  for (const auto& [id, cam] : chunk.cameras()) {
    if (!global_map.cameras().count(id)) global_map.setCamera(cam);
  }
  if (!global_map.hasMission(mission_id)) {
    Mission mission = chunk.mission(mission_id);
    global_map.addMission(mission);
  }

  for (const auto& [vid, v] : chunk.vertices()) {
    if (global_map.hasVertex(vid)) {
      // The duplicated boundary vertex; the copies are identical by
      // construction, so the existing one stands.
      continue;
    }
    global_map.addVertex(v);
  }
  for (const auto& [vid, blob] : chunk.attachments()) {
    if (!global_map.attachment(vid)) global_map.setAttachment(vid, blob);
  }
  for (const auto& [eid, e] : chunk.edges()) {
    if (!global_map.hasEdge(eid)) {
      global_map.addEdge(e);
      if (const auto* samples = chunk.imuSamples(eid)) global_map.setImuSamples(eid, *samples);
    }
  }
  for (const auto& [lid, lm] : chunk.landmarks()) {
    if (!global_map.hasLandmark(lid)) {
      global_map.addLandmark(lm);
      continue;
    }
    // Union of observations; the earlier chunk keeps the host.
    for (const auto& ref : lm.observations) {
      global_map.addObservation(lid, ref);
    }
  }
}

namespace {
constexpr char kSubmapMagic[8] = {'A', 'T', 'L', 'S', 'S', 'U', 'B', 'M'};
}

std::vector<std::uint8_t> serializeSubmap(const Submap& submap) {
  std::vector<std::uint8_t> out;
  for (char c : kSubmapMagic) out.push_back(static_cast<std::uint8_t>(c));
  auto pushU32 = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto pushU64 = [&out](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  pushU32(static_cast<std::uint32_t>(submap.robot_id.size()));
  out.insert(out.end(), submap.robot_id.begin(), submap.robot_id.end());
  pushU32(submap.sequence_number);
  pushU64(submap.boundary_vertex.hi);
  pushU64(submap.boundary_vertex.lo);
  const auto map_bytes = serializeMapToBytes(submap.chunk);
  pushU64(map_bytes.size());
  out.insert(out.end(), map_bytes.begin(), map_bytes.end());
  return out;
}

Submap deserializeSubmap(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > bytes.size()) throw SerializationError("truncated submap");
  };
  need(8);
  for (char c : kSubmapMagic) {
    if (bytes[pos++] != static_cast<std::uint8_t>(c)) {
      throw SerializationError("bad submap magic");
    }
  }
  auto readU32 = [&]() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  };
  auto readU64 = [&]() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  };
  Submap submap;
  const std::uint32_t name_len = readU32();
  need(name_len);
  submap.robot_id.assign(bytes.begin() + pos, bytes.begin() + pos + name_len);
  pos += name_len;
  submap.sequence_number = readU32();
  submap.boundary_vertex.hi = readU64();
  submap.boundary_vertex.lo = readU64();
  const std::uint64_t map_len = readU64();
  need(map_len);
  std::vector<std::uint8_t> map_bytes(bytes.begin() + pos, bytes.begin() + pos + map_len);
  pos += map_len;
  if (pos != bytes.size()) throw SerializationError("trailing bytes in submap");
  submap.chunk = deserializeMapFromBytes(map_bytes);
  return submap;
}

void writeSubmapFile(const Submap& submap, const std::string& path) {
  writeFileBytes(path, serializeSubmap(submap));
}

Submap readSubmapFile(const std::string& path) {
  return deserializeSubmap(readFileBytes(path));
}

std::string submapSpoolPath(const std::string& spool_root, const std::string& robot_id,
                            std::uint32_t sequence_number) {
  return spool_root + "/" + robot_id + "/" + std::to_string(sequence_number) + ".submap";
}

}  // namespace atlas
