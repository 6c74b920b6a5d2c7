#include "atlas/cloud.h"

#include <cstring>
#include <stdexcept>

namespace atlas {

std::vector<std::uint8_t> encodeCloud(const PointCloud& cloud) {
  std::vector<std::uint8_t> out(8 + cloud.size() * 12);
  const std::uint64_t count = cloud.size();
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(count >> (8 * i));
  std::size_t offset = 8;
  for (const auto& p : cloud) {
    const float xyz[3] = {static_cast<float>(p.x()), static_cast<float>(p.y()),
                          static_cast<float>(p.z())};
    std::memcpy(out.data() + offset, xyz, 12);
    offset += 12;
  }
  return out;
}

PointCloud decodeCloud(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw std::invalid_argument("decodeCloud: missing count header");
  std::uint64_t count = 0;
  for (int i = 0; i < 8; ++i) count |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  if (bytes.size() != 8 + count * 12) {
    throw std::invalid_argument("decodeCloud: size does not match count");
  }
  PointCloud cloud(count);
  std::size_t offset = 8;
  for (std::uint64_t i = 0; i < count; ++i) {
    float xyz[3];
    std::memcpy(xyz, bytes.data() + offset, 12);
    offset += 12;
    cloud[i] = Eigen::Vector3d(xyz[0], xyz[1], xyz[2]);
  }
  return cloud;
}

}  // namespace atlas
