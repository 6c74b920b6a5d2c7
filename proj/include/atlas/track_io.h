#pragma once

#include <string>
#include <vector>

#include "atlas/map.h"

namespace atlas {

// Feature-track CSV interface, one observation per line:
//   track_id,vertex_id,camera_id,u,v,depth?,feature_type,descriptor_hex
// depth is left empty for pure bearing observations. Vertex and camera ids
// are 32-char hex. A '#' line or a leading header line is skipped.
//
// One landmark per track. A track whose observations all carry depth becomes
// an Averaged3D landmark, otherwise a Triangulated one. Positions come from
// the kind-appropriate initializer; failures are kept with quality Bad.
std::vector<LandmarkId> ingestFeatureTracks(VIMap& map, const std::string& csv_text);
std::vector<LandmarkId> ingestFeatureTracksFile(VIMap& map, const std::string& path);

}  // namespace atlas
