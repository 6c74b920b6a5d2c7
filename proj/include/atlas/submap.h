#pragma once

#include <string>
#include <vector>

#include "atlas/map.h"

namespace atlas {

// One chunk of a robot's growing map. Chunks carry exactly one mission; the
// last vertex of chunk n is duplicated as the first vertex of chunk n+1 so
// that no edge or feature track is severed without an anchor.
struct Submap {
  std::string robot_id;
  std::uint32_t sequence_number = 0;
  VertexId boundary_vertex;  // last chain vertex of this chunk
  VIMap chunk;
};

// Splits a single-mission map into submaps of `interval` vertices (plus the
// duplicated boundary vertex on every chunk after the first). Ids are stable:
// concatenating the chunks reproduces the original map exactly.
std::vector<Submap> splitIntoSubmaps(const VIMap& map, int interval,
                                     const std::string& robot_id);

// Merges a chunk into the global map: the duplicated boundary vertex
// collapses onto its already-present copy, landmark observation sets union by
// id, edges and attachments carry over.
void concatenateSubmap(VIMap& global_map, const Submap& submap);

// Submap container: header (robot id, sequence number, boundary vertex)
// followed by the map container bytes.
std::vector<std::uint8_t> serializeSubmap(const Submap& submap);
Submap deserializeSubmap(const std::vector<std::uint8_t>& bytes);
void writeSubmapFile(const Submap& submap, const std::string& path);
Submap readSubmapFile(const std::string& path);

// Spool layout: <root>/<robot_id>/<sequence>.submap
std::string submapSpoolPath(const std::string& spool_root, const std::string& robot_id,
                            std::uint32_t sequence_number);

}  // namespace atlas
