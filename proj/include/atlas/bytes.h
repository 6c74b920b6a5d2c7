#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

namespace atlas {

std::string hexEncode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> hexDecode(const std::string& hex);

std::vector<std::uint8_t> floatsToBytes(std::span<const float> values);
std::vector<float> bytesToFloats(std::span<const std::uint8_t> bytes);

// Hamming distance over raw descriptor bytes.
inline int hammingDistance(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  int dist = 0;
  std::size_t i = 0;
  for (; i + 8 <= a.size(); i += 8) {
    std::uint64_t wa, wb;
    std::memcpy(&wa, a.data() + i, 8);
    std::memcpy(&wb, b.data() + i, 8);
    dist += std::popcount(wa ^ wb);
  }
  for (; i < a.size(); ++i) {
    dist += std::popcount(static_cast<unsigned>(a[i] ^ b[i]));
  }
  return dist;
}

inline double euclideanDistanceSq(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return sum;
}

}  // namespace atlas
