#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "atlas/map.h"

namespace atlas {

class SerializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Canonical, versioned, chunked binary container (see FORMAT.md). Two maps
// that are equal as graphs serialize to identical bytes.
std::vector<std::uint8_t> serializeMapToBytes(const VIMap& map);
VIMap deserializeMapFromBytes(const std::vector<std::uint8_t>& bytes);

void serializeMap(const VIMap& map, const std::string& path);
VIMap deserializeMap(const std::string& path);

std::vector<std::uint8_t> readFileBytes(const std::string& path);
void writeFileBytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace atlas
