#pragma once

#include "atlas/icp.h"
#include "atlas/loop_closure.h"
#include "atlas/map.h"

namespace atlas {

struct RegistrationReport {
  bool success = false;
  IcpResult icp;
  CommitReport commit;
  std::string message;
};

// ICP between the cloud attachments of two vertices, seeded by the current
// relative pose estimate; on convergence commits a loop-closure edge with the
// ICP covariance and switch = 1.
RegistrationReport registerAndCommit(VIMap& map, const VertexId& vertex_a,
                                     const VertexId& vertex_b, const IcpOptions& icp_options = {},
                                     const LoopClosureOptions& lc_options = {});

}  // namespace atlas
