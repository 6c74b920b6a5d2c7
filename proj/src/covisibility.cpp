#include "atlas/covisibility.h"

#include <algorithm>
#include <map>
#include <set>

namespace atlas {

namespace {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) {
    for (std::size_t i = 0; i < n; ++i) parent_[i] = i;
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

std::vector<std::vector<LandmarkId>> covisibilityComponents(
    const VIMap& map, const std::vector<LandmarkId>& landmarks) {
  std::vector<LandmarkId> unique = landmarks;
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());

  UnionFind uf(unique.size());
  std::map<VertexId, std::size_t> first_observer_of;
  for (std::size_t i = 0; i < unique.size(); ++i) {
    const Landmark& lm = map.landmark(unique[i]);
    std::set<VertexId> observers;
    for (const auto& ref : lm.observations) observers.insert(ref.vertex);
    for (const VertexId& v : observers) {
      const auto [it, inserted] = first_observer_of.emplace(v, i);
      if (!inserted) uf.unite(i, it->second);
    }
  }

  std::map<std::size_t, std::vector<LandmarkId>> by_root;
  for (std::size_t i = 0; i < unique.size(); ++i) {
    by_root[uf.find(i)].push_back(unique[i]);
  }
  std::vector<std::vector<LandmarkId>> components;
  for (auto& [root, members] : by_root) {
    std::sort(members.begin(), members.end());
    components.push_back(std::move(members));
  }
  std::sort(components.begin(), components.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return components;
}

std::vector<CandidateMatch> covisibilityFilter(const VIMap& map,
                                               const std::vector<CandidateMatch>& candidates,
                                               int min_cluster) {
  std::vector<LandmarkId> matched;
  matched.reserve(candidates.size());
  for (const auto& c : candidates) matched.push_back(c.landmark);

  std::set<LandmarkId> kept;
  for (const auto& component : covisibilityComponents(map, matched)) {
    if (static_cast<int>(component.size()) >= min_cluster) {
      kept.insert(component.begin(), component.end());
    }
  }

  std::vector<CandidateMatch> out;
  for (const auto& c : candidates) {
    if (kept.count(c.landmark)) out.push_back(c);
  }
  return out;
}

}  // namespace atlas
