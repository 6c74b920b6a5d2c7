#pragma once

#include <vector>

#include "atlas/map.h"

namespace atlas {

struct CandidateMatch {
  KeypointRef query;
  LandmarkId landmark;
  double distance = 0.0;
};

// Connected components of the covisibility graph over the given landmarks:
// two landmarks are connected when they share an observing vertex. Components
// are returned sorted (by lowest member id) with sorted members.
std::vector<std::vector<LandmarkId>> covisibilityComponents(
    const VIMap& map, const std::vector<LandmarkId>& landmarks);

// Keeps only candidates whose matched landmark lies in a covisibility
// component of at least min_cluster matched landmarks.
std::vector<CandidateMatch> covisibilityFilter(const VIMap& map,
                                               const std::vector<CandidateMatch>& candidates,
                                               int min_cluster);

}  // namespace atlas
