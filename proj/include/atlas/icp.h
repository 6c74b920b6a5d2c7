#pragma once

#include "atlas/cloud.h"
#include "atlas/config.h"
#include "atlas/pose.h"

namespace atlas {

struct IcpOptions {
  int max_iterations = 50;
  double max_correspondence_distance = 1.0;
  double min_rms_change = 1e-9;

  static IcpOptions fromConfig(const Config& config);
};

enum class IcpStatus : std::uint8_t { Ok = 0, NoCorrespondences, TooFewPoints, Degenerate };

struct IcpResult {
  IcpStatus status = IcpStatus::Ok;
  bool converged = false;
  Pose6 T_target_source;
  double rms = 0.0;
  int iterations = 0;
  std::vector<double> rms_history;  // post-alignment RMS per iteration

  [[nodiscard]] bool ok() const { return status == IcpStatus::Ok; }
};

// Point-to-point ICP: exact nearest-neighbor correspondences with a distance
// gate, closed-form rigid alignment per iteration, until the RMS change drops
// below min_rms_change or max_iterations.
IcpResult icpPointToPoint(const PointCloud& source, const PointCloud& target, const Pose6& T_init,
                          const IcpOptions& options = {});

}  // namespace atlas
