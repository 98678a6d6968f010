#pragma once

// Same-component queries over a mutable edge configuration, and cluster
// geometry (spanning, L-infinity diameter) inside axis-aligned boxes.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "rcm/geometry.hpp"

namespace rcm {

/// Disjoint-set forest with path halving and union by size.
class UnionFind {
 public:
  explicit UnionFind(int n = 0) { reset(n); }

  void reset(int n) {
    parent_.resize(n);
    size_.assign(n, 1);
    std::iota(parent_.begin(), parent_.end(), 0);
    components_ = n;
  }

  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    --components_;
    return true;
  }

  int components() const { return components_; }
  int size() const { return static_cast<int>(parent_.size()); }

 private:
  std::vector<int> parent_;
  std::vector<int> size_;
  int components_ = 0;
};

/// Connectivity over a fixed vertex set and edge list whose open/closed
/// states change. Openings are merged into the union-find directly;
/// closings invalidate it and it is rebuilt lazily at the next query.
class ConnectivityState {
 public:
  ConnectivityState() = default;

  ConnectivityState(int vertices, std::vector<std::pair<int, int>> edges,
                    std::vector<std::uint8_t> states = {})
      : nv_(vertices), edges_(std::move(edges)), state_(std::move(states)) {
    if (state_.empty()) state_.assign(edges_.size(), 0);
    require(state_.size() == edges_.size(), "state vector size mismatch");
    incident_.assign(nv_, {});
    for (int e = 0; e < static_cast<int>(edges_.size()); ++e) {
      auto [a, b] = edges_[e];
      require(a >= 0 && a < nv_ && b >= 0 && b < nv_, "edge endpoint out of range");
      incident_[a].push_back(e);
      if (b != a) incident_[b].push_back(e);
    }
    open_ = static_cast<int>(std::count(state_.begin(), state_.end(), 1));
    rebuild();
  }

  int vertex_count() const { return nv_; }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  std::uint64_t version() const { return version_; }
  int open_count() const { return open_; }
  bool state(int e) const { return state_[e] != 0; }
  std::span<const std::uint8_t> states() const { return state_; }
  std::pair<int, int> endpoints(int e) const { return edges_[e]; }

  void set_edge(int e, bool open) {
    ++version_;
    if (state(e) == open) return;
    state_[e] = open ? 1 : 0;
    if (open) {
      ++open_;
      if (!dirty_) uf_.unite(edges_[e].first, edges_[e].second);
    } else {
      --open_;
      dirty_ = true;
    }
  }

  bool connected(int i, int j) {
    if (i == j) return true;
    if (dirty_) rebuild();
    return uf_.find(i) == uf_.find(j);
  }

  /// Whether i and j are joined by open edges other than `skip`.
  bool connected_without(int i, int j, int skip) {
    if (!state(skip)) return connected(i, j);
    if (i == j) return true;
    // `skip` is open: search from i avoiding it. Cost is bounded by the
    // size of the component.
    mark_.resize(nv_, 0);
    ++stamp_;
    if (stamp_ == 0) {
      std::fill(mark_.begin(), mark_.end(), 0);
      stamp_ = 1;
    }
    stack_.clear();
    stack_.push_back(i);
    mark_[i] = stamp_;
    while (!stack_.empty()) {
      int v = stack_.back();
      stack_.pop_back();
      for (int e : incident_[v]) {
        if (e == skip || !state_[e]) continue;
        int w = edges_[e].first == v ? edges_[e].second : edges_[e].first;
        if (w == j) return true;
        if (mark_[w] != stamp_) {
          mark_[w] = stamp_;
          stack_.push_back(w);
        }
      }
    }
    return false;
  }

  int component_count() {
    if (dirty_) rebuild();
    return uf_.components();
  }

  /// Component representative of every vertex.
  std::vector<int> labels() {
    if (dirty_) rebuild();
    std::vector<int> out(nv_);
    for (int v = 0; v < nv_; ++v) out[v] = uf_.find(v);
    return out;
  }

 private:
  void rebuild() {
    uf_.reset(nv_);
    for (int e = 0; e < static_cast<int>(edges_.size()); ++e)
      if (state_[e]) uf_.unite(edges_[e].first, edges_[e].second);
    dirty_ = false;
  }

  int nv_ = 0;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::uint8_t> state_;
  std::vector<std::vector<int>> incident_;
  UnionFind uf_;
  bool dirty_ = false;
  int open_ = 0;
  std::uint64_t version_ = 0;
  std::vector<std::uint32_t> mark_;
  std::uint32_t stamp_ = 0;
  std::vector<int> stack_;
};

/// Breadth-first component labelling; the reference the union-find path is
/// tested against.
inline std::vector<int> bfs_labels(int vertices,
                                   std::span<const std::pair<int, int>> edges,
                                   std::span<const std::uint8_t> states) {
  std::vector<std::vector<int>> adj(vertices);
  for (std::size_t e = 0; e < edges.size(); ++e)
    if (states[e]) {
      adj[edges[e].first].push_back(edges[e].second);
      adj[edges[e].second].push_back(edges[e].first);
    }
  std::vector<int> label(vertices, -1);
  std::vector<int> queue;
  for (int s = 0; s < vertices; ++s) {
    if (label[s] >= 0) continue;
    label[s] = s;
    queue.assign(1, s);
    for (std::size_t h = 0; h < queue.size(); ++h)
      for (int w : adj[queue[h]])
        if (label[w] < 0) {
          label[w] = s;
          queue.push_back(w);
        }
  }
  return label;
}

/// An axis-aligned box B_r(center) on the torus with its internal edges
/// (both endpoints inside). Clusters "restricted to the box" only use these.
struct Box {
  const TorusGeometry* torus = nullptr;
  Vertex center = 0;
  int radius = 0;
  std::vector<Vertex> vertices;                 // sorted
  std::vector<std::vector<int>> offsets;        // per vertex, per axis, in [-r, r]
  std::vector<Edge> edges;                      // internal torus edges
  std::vector<std::pair<int, int>> local_ends;  // endpoints as vertex positions

  Box() = default;
  Box(const TorusGeometry& g, Vertex c, int r) : torus(&g), center(c), radius(r) {
    vertices = g.ball(c, r);
    offsets.resize(vertices.size());
    for (std::size_t i = 0; i < vertices.size(); ++i) {
      offsets[i].resize(g.dim());
      for (int k = 0; k < g.dim(); ++k) offsets[i][k] = g.offset(c, vertices[i], k);
    }
    for (std::size_t i = 0; i < vertices.size(); ++i)
      for (int k = 0; k < g.dim(); ++k) {
        if (offsets[i][k] == r) continue;
        Edge e = g.edge(vertices[i], k);
        Vertex w = g.endpoints(e).second;
        auto it = std::lower_bound(vertices.begin(), vertices.end(), w);
        edges.push_back(e);
        local_ends.emplace_back(static_cast<int>(i),
                                static_cast<int>(it - vertices.begin()));
      }
  }

  /// Edge length of the box side (so a full configuration has diameter side()).
  int side() const { return 2 * radius; }
};

struct BoxClusterSummary {
  bool spanning = false;      // some cluster touches all 2d faces
  int max_diameter = 0;       // largest L-infinity extent of a cluster
  int clusters_at_least = 0;  // clusters with diameter >= the threshold asked for
};

/// Cluster geometry of the open box-internal edges. `is_open(e)` is queried
/// for torus edge ids of box.edges.
template <class IsOpen>
BoxClusterSummary analyze_box(const Box& box, IsOpen&& is_open,
                              int diameter_threshold) {
  const int nv = static_cast<int>(box.vertices.size());
  const int d = box.torus->dim();
  UnionFind uf(nv);
  for (std::size_t i = 0; i < box.edges.size(); ++i)
    if (is_open(box.edges[i])) uf.unite(box.local_ends[i].first, box.local_ends[i].second);
  std::vector<int> lo(static_cast<std::size_t>(nv) * d, 1 << 20);
  std::vector<int> hi(static_cast<std::size_t>(nv) * d, -(1 << 20));
  std::vector<char> root(nv, 0);
  for (int v = 0; v < nv; ++v) {
    int r = uf.find(v);
    root[r] = 1;
    for (int k = 0; k < d; ++k) {
      lo[r * d + k] = std::min(lo[r * d + k], box.offsets[v][k]);
      hi[r * d + k] = std::max(hi[r * d + k], box.offsets[v][k]);
    }
  }
  BoxClusterSummary s;
  for (int r = 0; r < nv; ++r) {
    if (!root[r]) continue;
    int diam = 0;
    bool spans = true;
    for (int k = 0; k < d; ++k) {
      diam = std::max(diam, hi[r * d + k] - lo[r * d + k]);
      if (lo[r * d + k] != -box.radius || hi[r * d + k] != box.radius) spans = false;
    }
    s.spanning = s.spanning || spans;
    s.max_diameter = std::max(s.max_diameter, diam);
    if (diam >= diameter_threshold) ++s.clusters_at_least;
  }
  return s;
}

/// Whether one open cluster of the box touches all 2d faces. `states` is a
/// configuration over all torus edges.
inline bool spans_box(const Box& box, std::span<const std::uint8_t> states) {
  return analyze_box(box, [&](Edge e) { return states[e] != 0; }, 1).spanning;
}

inline int max_cluster_diameter(const Box& box,
                                std::span<const std::uint8_t> states) {
  return analyze_box(box, [&](Edge e) { return states[e] != 0; }, 1).max_diameter;
}

}  // namespace rcm
