#include "atlas/registration.h"

namespace atlas {

RegistrationReport registerAndCommit(VIMap& map, const VertexId& vertex_a,
                                     const VertexId& vertex_b, const IcpOptions& icp_options,
                                     const LoopClosureOptions& lc_options) {
  RegistrationReport report;
  const auto* blob_a = map.attachment(vertex_a);
  const auto* blob_b = map.attachment(vertex_b);
  if (!blob_a || !blob_b) {
    report.message = "missing cloud attachment";
    return report;
  }
  const PointCloud cloud_a = decodeCloud(*blob_a);
  const PointCloud cloud_b = decodeCloud(*blob_b);

  const Pose6 T_init = map.globalPose(vertex_a).inverse() * map.globalPose(vertex_b);
  report.icp = icpPointToPoint(cloud_b, cloud_a, T_init, icp_options);
  if (!report.icp.ok() || !report.icp.converged) {
    report.message = "icp failed";
    return report;
  }

  LoopClosureResult result;
  result.vertex_a = vertex_a;
  result.vertex_b = vertex_b;
  result.mission_a = map.vertex(vertex_a).mission;
  result.mission_b = map.vertex(vertex_b).mission;
  result.T_A_B = report.icp.T_target_source;
  result.method = LoopClosureMethod::Icp;
  result.covariance = loopClosureCovariance(LoopClosureMethod::Icp, lc_options);
  report.commit = commitLoopClosure(map, result, CommitMode::Edge);
  report.success = true;
  return report;
}

}  // namespace atlas
