#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace atlas {

using PointCloud = std::vector<Eigen::Vector3d>;

// Attachment blob layout: u64 little-endian point count, then float32 xyz
// triplets.
std::vector<std::uint8_t> encodeCloud(const PointCloud& cloud);
PointCloud decodeCloud(std::span<const std::uint8_t> bytes);

}  // namespace atlas
