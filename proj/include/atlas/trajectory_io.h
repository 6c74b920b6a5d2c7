#pragma once

#include <string>
#include <vector>

#include "atlas/map.h"

namespace atlas {

struct TrajectoryPoint {
  double t = 0.0;  // seconds
  Pose6 pose;
};

using Trajectory = std::vector<TrajectoryPoint>;

// TUM line: "timestamp_s tx ty tz qx qy qz qw", 9 decimal places.
std::string tumLine(double t, const Pose6& pose);
void writeTumFile(const Trajectory& trajectory, const std::string& path);
Trajectory readTumFile(const std::string& path);

// Per-vertex global-frame trajectory of one mission, in time order.
Trajectory missionTrajectory(const VIMap& map, const MissionId& mission);

// Landmark export: "id,x,y,z,quality" rows, positions in the global frame.
void writeLandmarksCsv(const VIMap& map, const std::string& path);

}  // namespace atlas
