#include "atlas/trajectory_io.h"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace atlas {

std::string tumLine(double t, const Pose6& pose) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.9f %.9f %.9f %.9f %.9f %.9f %.9f %.9f", t, pose.t.x(),
                pose.t.y(), pose.t.z(), pose.q.x(), pose.q.y(), pose.q.z(), pose.q.w());
  return buf;
}

void writeTumFile(const Trajectory& trajectory, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trajectory " + path);
  for (const auto& p : trajectory) out << tumLine(p.t, p.pose) << "\n";
}

Trajectory readTumFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read trajectory " + path);
  Trajectory out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream iss(line);
    TrajectoryPoint p;
    double qx, qy, qz, qw;
    if (!(iss >> p.t >> p.pose.t.x() >> p.pose.t.y() >> p.pose.t.z() >> qx >> qy >> qz >> qw)) {
      throw std::runtime_error("malformed TUM line: " + line);
    }
    p.pose.q = Eigen::Quaterniond(qw, qx, qy, qz);
    p.pose.normalize();
    out.push_back(p);
  }
  return out;
}

Trajectory missionTrajectory(const VIMap& map, const MissionId& mission) {
  const Pose6 T_G_M = map.mission(mission).T_G_M;
  Trajectory out;
  for (const VertexId& vid : map.missionVertexChain(mission)) {
    const Vertex& v = map.vertex(vid);
    TrajectoryPoint p;
    p.t = static_cast<double>(v.timestamp_ns) * 1e-9;
    p.pose = T_G_M * v.T_M_I;
    out.push_back(p);
  }
  return out;
}

void writeLandmarksCsv(const VIMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write landmarks " + path);
  out << "id,x,y,z,quality\n";
  for (const auto& [lid, lm] : map.landmarks()) {
    const Pose6 T_G_M = map.mission(map.vertex(lm.host).mission).T_G_M;
    const Eigen::Vector3d p = T_G_M * lm.p_M;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%.9f,%.9f,%.9f,%d", lid.hex().c_str(), p.x(), p.y(),
                  p.z(), static_cast<int>(lm.quality));
    out << buf << "\n";
  }
}

}  // namespace atlas
