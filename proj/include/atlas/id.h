#pragma once

#include <compare>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace atlas {

// 128-bit random identifier. Zero is reserved as "unset". Ids are merge-safe
// across sessions without coordination; collisions are negligible at the map
// sizes this backend targets.
template <typename Tag>
struct Id128 {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  constexpr Id128() = default;
  constexpr Id128(std::uint64_t h, std::uint64_t l) : hi(h), lo(l) {}

  [[nodiscard]] bool isValid() const { return hi != 0 || lo != 0; }

  auto operator<=>(const Id128&) const = default;

  [[nodiscard]] std::string hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out(32, '0');
    std::uint64_t parts[2] = {hi, lo};
    for (int p = 0; p < 2; ++p) {
      for (int i = 0; i < 16; ++i) {
        out[p * 16 + i] = digits[(parts[p] >> (60 - 4 * i)) & 0xF];
      }
    }
    return out;
  }

  static Id128 fromHex(const std::string& s) {
    if (s.size() != 32) {
      throw std::invalid_argument("Id128::fromHex: expected 32 hex chars, got '" + s + "'");
    }
    auto nibble = [](char c) -> std::uint64_t {
      if (c >= '0' && c <= '9') return static_cast<std::uint64_t>(c - '0');
      if (c >= 'a' && c <= 'f') return static_cast<std::uint64_t>(c - 'a' + 10);
      if (c >= 'A' && c <= 'F') return static_cast<std::uint64_t>(c - 'A' + 10);
      throw std::invalid_argument("Id128::fromHex: bad hex char");
    };
    Id128 id;
    for (int i = 0; i < 16; ++i) id.hi = (id.hi << 4) | nibble(s[i]);
    for (int i = 0; i < 16; ++i) id.lo = (id.lo << 4) | nibble(s[16 + i]);
    return id;
  }
};

using MissionId = Id128<struct MissionIdTag>;
using VertexId = Id128<struct VertexIdTag>;
using EdgeId = Id128<struct EdgeIdTag>;
using LandmarkId = Id128<struct LandmarkIdTag>;
using CameraId = Id128<struct CameraIdTag>;

// Seeded source of fresh ids. All id creation in the pipeline goes through a
// generator so that identical inputs replay to identical maps.
class IdGenerator {
 public:
  explicit IdGenerator(std::uint64_t seed) : rng_(seed) {}

  template <typename IdT>
  IdT next() {
    IdT id;
    do {
      id.hi = rng_();
      id.lo = rng_();
    } while (!id.isValid());
    return id;
  }

 private:
  std::mt19937_64 rng_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Content-derived id, used where the same logical object must get the same id
// on every run (e.g. loop-closure edges between a fixed vertex pair).
template <typename IdT>
IdT deriveId(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d,
             std::uint64_t salt) {
  IdT id;
  id.hi = splitmix64(a ^ splitmix64(b ^ salt));
  id.lo = splitmix64(c ^ splitmix64(d ^ ~salt));
  if (!id.isValid()) id.lo = 1;
  return id;
}

}  // namespace atlas

template <typename Tag>
struct std::hash<atlas::Id128<Tag>> {
  std::size_t operator()(const atlas::Id128<Tag>& id) const noexcept {
    return static_cast<std::size_t>(id.hi ^ (id.lo * 0x9e3779b97f4a7c15ULL));
  }
};
