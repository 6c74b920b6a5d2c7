#include "atlas/descriptor_index.h"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_map>

#include "atlas/bytes.h"

namespace atlas {

namespace {

bool matchLess(const DescriptorMatch& a, const DescriptorMatch& b) {
  if (a.distance != b.distance) return a.distance < b.distance;
  return a.landmark < b.landmark;
}

// Fixed-capacity best-k set ordered by (distance, id).
class BestK {
 public:
  BestK(int k, double max_distance) : k_(k), max_distance_(max_distance) {}

  void offer(const DescriptorMatch& m) {
    if (m.distance > max_distance_) return;
    if (static_cast<int>(items_.size()) < k_) {
      items_.push_back(m);
      std::push_heap(items_.begin(), items_.end(), matchLess);
      return;
    }
    if (matchLess(m, items_.front())) {
      std::pop_heap(items_.begin(), items_.end(), matchLess);
      items_.back() = m;
      std::push_heap(items_.begin(), items_.end(), matchLess);
    }
  }

  // Largest admissible distance for pruning.
  [[nodiscard]] double bound() const {
    if (static_cast<int>(items_.size()) < k_) return max_distance_;
    return items_.front().distance;
  }

  [[nodiscard]] std::vector<DescriptorMatch> sorted() {
    std::sort(items_.begin(), items_.end(), matchLess);
    return std::move(items_);
  }

 private:
  int k_;
  double max_distance_;
  std::vector<DescriptorMatch> items_;
};

struct KdNode {
  int split_dim = -1;      // -1 marks a leaf
  float split_value = 0.0f;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t begin = 0;  // leaf range into the permutation array
  std::int32_t end = 0;
};

constexpr int kLeafSize = 8;

}  // namespace

struct DescriptorIndex::Impl {
  FeatureTypeConfig config;
  std::vector<LandmarkId> ids;
  bool built = false;

  // Float storage.
  int dim = 0;
  std::vector<float> points;  // row-major [n x dim]
  std::vector<std::int32_t> perm;
  std::vector<KdNode> nodes;

  // Binary storage.
  std::vector<std::uint8_t> codes;  // row-major [n x byte_width]
  std::size_t byte_width = 0;
  int n_chunks = 0;
  std::vector<std::pair<int, int>> chunk_spans;  // byte offset, byte length
  // buckets[c] maps a chunk value to the entry indices holding it.
  std::vector<std::unordered_map<std::uint32_t, std::vector<std::uint32_t>>> buckets;

  [[nodiscard]] std::span<const float> point(std::int32_t i) const {
    return {points.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
  }
  [[nodiscard]] std::span<const std::uint8_t> code(std::int32_t i) const {
    return {codes.data() + static_cast<std::size_t>(i) * byte_width, byte_width};
  }

  std::int32_t buildKdNode(std::int32_t begin, std::int32_t end) {
    KdNode node;
    node.begin = begin;
    node.end = end;
    const std::int32_t index = static_cast<std::int32_t>(nodes.size());
    nodes.push_back(node);
    if (end - begin <= kLeafSize) return index;

    // Split on the widest dimension at the median.
    int best_dim = 0;
    float best_spread = -1.0f;
    for (int d = 0; d < dim; ++d) {
      float lo = point(perm[begin])[d], hi = lo;
      for (std::int32_t i = begin + 1; i < end; ++i) {
        const float v = point(perm[i])[d];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        best_dim = d;
      }
    }
    if (best_spread <= 0.0f) return index;  // all points identical

    const std::int32_t mid = begin + (end - begin) / 2;
    std::nth_element(perm.begin() + begin, perm.begin() + mid, perm.begin() + end,
                     [&](std::int32_t a, std::int32_t b) {
                       if (point(a)[best_dim] != point(b)[best_dim]) {
                         return point(a)[best_dim] < point(b)[best_dim];
                       }
                       return a < b;
                     });
    nodes[index].split_dim = best_dim;
    nodes[index].split_value = point(perm[mid])[best_dim];
    const std::int32_t left = buildKdNode(begin, mid);
    const std::int32_t right = buildKdNode(mid, end);
    nodes[index].left = left;
    nodes[index].right = right;
    return index;
  }

  void searchKd(std::int32_t node_index, std::span<const float> query, BestK& best) const {
    const KdNode& node = nodes[node_index];
    if (node.split_dim < 0) {
      for (std::int32_t i = node.begin; i < node.end; ++i) {
        const std::int32_t entry = perm[i];
        const double dist_sq = euclideanDistanceSq(query, point(entry));
        best.offer({ids[entry], std::sqrt(dist_sq)});
      }
      return;
    }
    const double delta = static_cast<double>(query[node.split_dim]) - node.split_value;
    const std::int32_t near = delta <= 0.0 ? node.left : node.right;
    const std::int32_t far = delta <= 0.0 ? node.right : node.left;
    searchKd(near, query, best);
    if (std::abs(delta) <= best.bound()) {
      searchKd(far, query, best);
    }
  }

  // Enumerates all chunk values within Hamming radius of `value` and collects
  // entries from the matching buckets.
  void collectBucket(int chunk, std::uint32_t value, int bits, int radius, int start_bit,
                     std::vector<std::uint32_t>& out) const {
    const auto it = buckets[chunk].find(value);
    if (it != buckets[chunk].end()) {
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
    if (radius == 0) return;
    for (int b = start_bit; b < bits; ++b) {
      collectBucket(chunk, value ^ (1u << b), bits, radius - 1, b + 1, out);
    }
  }
};

DescriptorIndex::DescriptorIndex(const FeatureTypeConfig& config)
    : impl_(std::make_unique<Impl>()) {
  impl_->config = config;
  if (config.descriptor_kind == DescriptorKind::Float) {
    impl_->dim = config.descriptor_size;
  } else {
    impl_->byte_width = config.descriptorByteWidth();
    // 16-bit chunks; a short trailing chunk keeps the cover exact.
    int offset = 0;
    while (offset < static_cast<int>(impl_->byte_width)) {
      const int len = std::min<int>(2, static_cast<int>(impl_->byte_width) - offset);
      impl_->chunk_spans.emplace_back(offset, len);
      offset += len;
    }
    impl_->n_chunks = static_cast<int>(impl_->chunk_spans.size());
    impl_->buckets.resize(impl_->n_chunks);
  }
}

DescriptorIndex::~DescriptorIndex() = default;
DescriptorIndex::DescriptorIndex(DescriptorIndex&&) noexcept = default;
DescriptorIndex& DescriptorIndex::operator=(DescriptorIndex&&) noexcept = default;

void DescriptorIndex::insert(const LandmarkId& id, std::span<const std::uint8_t> descriptor) {
  if (impl_->built) throw std::logic_error("DescriptorIndex: insert after build");
  if (descriptor.size() != impl_->config.descriptorByteWidth()) {
    throw std::invalid_argument("DescriptorIndex: descriptor width mismatch");
  }
  impl_->ids.push_back(id);
  if (impl_->config.descriptor_kind == DescriptorKind::Float) {
    const float* f = reinterpret_cast<const float*>(descriptor.data());
    impl_->points.insert(impl_->points.end(), f, f + impl_->dim);
  } else {
    impl_->codes.insert(impl_->codes.end(), descriptor.begin(), descriptor.end());
  }
}

void DescriptorIndex::build() {
  if (impl_->built) return;
  impl_->built = true;
  const std::int32_t n = static_cast<std::int32_t>(impl_->ids.size());
  if (n == 0) return;
  if (impl_->config.descriptor_kind == DescriptorKind::Float) {
    impl_->perm.resize(n);
    for (std::int32_t i = 0; i < n; ++i) impl_->perm[i] = i;
    impl_->nodes.reserve(2 * n / kLeafSize + 2);
    impl_->buildKdNode(0, n);
  } else {
    for (std::int32_t i = 0; i < n; ++i) {
      const auto code = impl_->code(i);
      for (int c = 0; c < impl_->n_chunks; ++c) {
        const auto [off, len] = impl_->chunk_spans[c];
        std::uint32_t value = 0;
        std::memcpy(&value, code.data() + off, len);
        impl_->buckets[c][value].push_back(static_cast<std::uint32_t>(i));
      }
    }
  }
}

std::size_t DescriptorIndex::size() const { return impl_->ids.size(); }
const FeatureTypeConfig& DescriptorIndex::config() const { return impl_->config; }

std::vector<DescriptorMatch> DescriptorIndex::knn(std::span<const std::uint8_t> query,
                                                  int k) const {
  if (!impl_->built) throw std::logic_error("DescriptorIndex: query before build");
  if (impl_->ids.empty()) throw std::logic_error("DescriptorIndex: query on empty index");
  if (query.size() != impl_->config.descriptorByteWidth()) {
    throw std::invalid_argument("DescriptorIndex: query width mismatch");
  }
  if (k <= 0) return {};

  BestK best(k, impl_->config.match_threshold);
  if (impl_->config.descriptor_kind == DescriptorKind::Float) {
    const float* f = reinterpret_cast<const float*>(query.data());
    impl_->searchKd(0, {f, static_cast<std::size_t>(impl_->dim)}, best);
    return best.sorted();
  }

  const int threshold = static_cast<int>(std::floor(impl_->config.match_threshold));
  const int radius = threshold / impl_->n_chunks;

  // With a large per-chunk radius the enumeration would visit more buckets
  // than a scan would touch entries; fall back to scanning.
  double enum_cost = 0.0;
  for (const auto& [off, len] : impl_->chunk_spans) {
    const int bits = 8 * len;
    double combos = 0.0, binom = 1.0;
    for (int i = 0; i <= std::min(radius, bits); ++i) {
      combos += binom;
      binom = binom * (bits - i) / (i + 1);
    }
    enum_cost += combos;
  }
  const std::int32_t n = static_cast<std::int32_t>(impl_->ids.size());
  if (enum_cost >= static_cast<double>(n)) {
    for (std::int32_t i = 0; i < n; ++i) {
      best.offer({impl_->ids[i], static_cast<double>(hammingDistance(query, impl_->code(i)))});
    }
    return best.sorted();
  }

  std::vector<std::uint32_t> candidates;
  for (int c = 0; c < impl_->n_chunks; ++c) {
    const auto [off, len] = impl_->chunk_spans[c];
    std::uint32_t value = 0;
    std::memcpy(&value, query.data() + off, len);
    impl_->collectBucket(c, value, 8 * len, radius, 0, candidates);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  for (const std::uint32_t i : candidates) {
    best.offer({impl_->ids[i], static_cast<double>(hammingDistance(query, impl_->code(i)))});
  }
  return best.sorted();
}

std::vector<std::vector<DescriptorMatch>> DescriptorIndex::knnBatch(
    const std::vector<std::vector<std::uint8_t>>& queries, int k, bool parallel) const {
  std::vector<std::vector<DescriptorMatch>> results(queries.size());
  const std::int64_t n = static_cast<std::int64_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 16) if (parallel)
  for (std::int64_t i = 0; i < n; ++i) {
    results[i] = knn(queries[i], k);
  }
  return results;
}

std::vector<DescriptorMatch> bruteForceKnn(
    const FeatureTypeConfig& config,
    const std::vector<std::pair<LandmarkId, std::vector<std::uint8_t>>>& corpus,
    std::span<const std::uint8_t> query, int k) {
  BestK best(k, config.match_threshold);
  if (config.descriptor_kind == DescriptorKind::Float) {
    const float* q = reinterpret_cast<const float*>(query.data());
    const std::size_t dim = static_cast<std::size_t>(config.descriptor_size);
    for (const auto& [id, desc] : corpus) {
      const float* d = reinterpret_cast<const float*>(desc.data());
      best.offer({id, std::sqrt(euclideanDistanceSq({q, dim}, {d, dim}))});
    }
  } else {
    for (const auto& [id, desc] : corpus) {
      best.offer({id, static_cast<double>(hammingDistance(query, desc))});
    }
  }
  return best.sorted();
}

std::vector<DescriptorMatch> applyRatioGate(std::vector<DescriptorMatch> matches, double ratio) {
  if (ratio >= 1.0 || matches.size() < 2) return matches;
  if (matches[0].distance >= ratio * matches[1].distance) return {};
  return matches;
}

}  // namespace atlas
