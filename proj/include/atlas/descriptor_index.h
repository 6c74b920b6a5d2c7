#pragma once

#include <memory>
#include <span>
#include <vector>

#include "atlas/id.h"
#include "atlas/map.h"

namespace atlas {

struct DescriptorMatch {
  LandmarkId landmark;
  double distance = 0.0;
};

// Exact k-nearest-neighbor index over landmark descriptors of one feature
// type. Float descriptors go through a KD-tree, binary descriptors through
// chunked Hamming buckets. Results are identical to a brute-force scan:
// up to k neighbors with distance <= match_threshold, ordered by
// (distance, landmark id).
class DescriptorIndex {
 public:
  explicit DescriptorIndex(const FeatureTypeConfig& config);
  ~DescriptorIndex();
  DescriptorIndex(DescriptorIndex&&) noexcept;
  DescriptorIndex& operator=(DescriptorIndex&&) noexcept;

  void insert(const LandmarkId& id, std::span<const std::uint8_t> descriptor);
  void build();

  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] bool empty() const { return size() == 0; }
  [[nodiscard]] const FeatureTypeConfig& config() const;

  // Requires build(). Concurrent queries are safe.
  [[nodiscard]] std::vector<DescriptorMatch> knn(std::span<const std::uint8_t> query,
                                                 int k) const;

  [[nodiscard]] std::vector<std::vector<DescriptorMatch>> knnBatch(
      const std::vector<std::vector<std::uint8_t>>& queries, int k, bool parallel = true) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Reference linear scan with the same result semantics as DescriptorIndex.
std::vector<DescriptorMatch> bruteForceKnn(
    const FeatureTypeConfig& config,
    const std::vector<std::pair<LandmarkId, std::vector<std::uint8_t>>>& corpus,
    std::span<const std::uint8_t> query, int k);

// Lowe-style ambiguity gate: with two or more neighbors, the whole result is
// dropped unless best < ratio * second-best. A ratio >= 1 disables the gate.
std::vector<DescriptorMatch> applyRatioGate(std::vector<DescriptorMatch> matches, double ratio);

}  // namespace atlas
