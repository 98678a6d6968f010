#pragma once

// Torus, coarse lattice and coarse space-time lattice geometry, plus
// polymers (connected sets of coarse sites) and their enumeration.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rcm/errors.hpp"

namespace rcm {

using Vertex = int;
using Edge = int;
using Site = int;
using Coords = std::vector<int>;

/// The torus {-N..N}^d with nearest-neighbour edges. Vertices are indexed
/// densely by their shifted coordinates c + N in [0, 2N]; edge (v, axis)
/// joins v to v + e_axis and has index v * d + axis.
class TorusGeometry {
 public:
  TorusGeometry(int dim, int half_side) : dim_(dim), half_(half_side) {
    require(dim >= 1, "torus dimension must be >= 1");
    require(half_side >= 0, "torus half-side must be >= 0");
    side_ = 2 * half_side + 1;
    long double count = std::pow(static_cast<long double>(side_), dim);
    if (count * dim > static_cast<long double>(std::numeric_limits<int>::max()))
      throw ConfigError("torus too large for the index space: d=" +
                        std::to_string(dim) + " N=" + std::to_string(half_side));
    nvert_ = 1;
    for (int k = 0; k < dim; ++k) nvert_ *= side_;
    stride_.resize(dim);
    int s = 1;
    for (int k = 0; k < dim; ++k) {
      stride_[k] = s;
      s *= side_;
    }
  }

  int dim() const { return dim_; }
  int half_side() const { return half_; }
  int side() const { return side_; }
  int vertex_count() const { return nvert_; }
  int edge_count() const { return nvert_ * dim_; }

  /// Coordinate along `axis` in [0, side).
  int coord(Vertex v, int axis) const { return (v / stride_[axis]) % side_; }

  Coords coords(Vertex v) const {
    Coords c(dim_);
    for (int k = 0; k < dim_; ++k) c[k] = coord(v, k);
    return c;
  }

  /// Coordinates in {-N..N}.
  Coords centered(Vertex v) const {
    Coords c = coords(v);
    for (int& x : c) x -= half_;
    return c;
  }

  /// Vertex with the given (possibly out-of-range) index coordinates,
  /// wrapped onto the torus.
  Vertex vertex(std::span<const int> c) const {
    Vertex v = 0;
    for (int k = 0; k < dim_; ++k) v += wrap(c[k]) * stride_[k];
    return v;
  }

  Vertex vertex_centered(std::span<const int> c) const {
    Coords shifted(c.begin(), c.end());
    for (int& x : shifted) x += half_;
    return vertex(shifted);
  }

  Vertex origin() const { return vertex_centered(Coords(dim_, 0)); }

  Vertex shift(Vertex v, int axis, int delta) const {
    int c = coord(v, axis);
    int nc = wrap(c + delta);
    return v + (nc - c) * stride_[axis];
  }

  Edge edge(Vertex v, int axis) const { return v * dim_ + axis; }
  Vertex edge_base(Edge e) const { return e / dim_; }
  int edge_axis(Edge e) const { return e % dim_; }
  std::pair<Vertex, Vertex> endpoints(Edge e) const {
    Vertex v = edge_base(e);
    return {v, shift(v, edge_axis(e), 1)};
  }

  /// Signed minimal-image offset b - a along one axis.
  int offset(Vertex a, Vertex b, int axis) const {
    int d = coord(b, axis) - coord(a, axis);
    d = ((d % side_) + side_) % side_;
    if (d > half_) d -= side_;
    return d;
  }

  int linf_distance(Vertex a, Vertex b) const {
    int m = 0;
    for (int k = 0; k < dim_; ++k) m = std::max(m, std::abs(offset(a, b, k)));
    return m;
  }

  /// B_r(center): vertices at L-infinity distance <= r. Requires 2r+1 <= side
  /// so the ball does not wrap onto itself.
  std::vector<Vertex> ball(Vertex center, int r) const {
    require(r >= 0 && 2 * r + 1 <= side_,
            "ball radius " + std::to_string(r) + " wraps the torus");
    std::vector<Vertex> out;
    Coords base = coords(center);
    Coords off(dim_, -r);
    while (true) {
      Coords c(dim_);
      for (int k = 0; k < dim_; ++k) c[k] = base[k] + off[k];
      out.push_back(vertex(c));
      int k = 0;
      while (k < dim_ && off[k] == r) off[k++] = -r;
      if (k == dim_) break;
      ++off[k];
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// E_r(center): edges {i, i + e_k} with i in B_r(center).
  std::vector<Edge> edge_block(Vertex center, int r) const {
    std::vector<Edge> out;
    for (Vertex v : ball(center, r))
      for (int k = 0; k < dim_; ++k) out.push_back(edge(v, k));
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Edges with at least one endpoint at L-infinity distance <= n from the
  /// origin (the window used by the weak-mixing hypothesis). The window must
  /// not wrap.
  std::vector<Edge> edge_window(int n) const {
    require(n >= 0 && 2 * n + 3 <= side_,
            "edge window of radius " + std::to_string(n) + " wraps the torus");
    Vertex o = origin();
    std::vector<Edge> out;
    for (Edge e = 0; e < edge_count(); ++e) {
      auto [a, b] = endpoints(e);
      if (linf_distance(o, a) <= n || linf_distance(o, b) <= n) out.push_back(e);
    }
    return out;
  }

  std::vector<Edge> all_edges() const {
    std::vector<Edge> out(edge_count());
    for (Edge e = 0; e < edge_count(); ++e) out[e] = e;
    return out;
  }

  friend bool operator==(const TorusGeometry& a, const TorusGeometry& b) {
    return a.dim_ == b.dim_ && a.half_ == b.half_;
  }

 private:
  int wrap(int c) const { return ((c % side_) + side_) % side_; }

  int dim_;
  int half_;
  int side_;
  int nvert_;
  std::vector<int> stride_;
};

inline TorusGeometry build_torus(int dim, int half_side) {
  return TorusGeometry(dim, half_side);
}

/// Coarse lattice T_N^L = ((2L+1)Z)^d on the torus. Sites are indexed by
/// coarse coordinates k in [0, m)^d with m = (2N+1)/(2L+1).
class CoarseLattice {
 public:
  CoarseLattice(const TorusGeometry& torus, int scale,
                double star_factor = std::numbers::sqrt2)
      : torus_(&torus), scale_(scale), star_factor_(star_factor) {
    require(scale >= 0, "coarse scale must be >= 0");
    block_ = 2 * scale + 1;
    if (torus.side() % block_ != 0)
      throw ConfigError("2N+1 = " + std::to_string(torus.side()) +
                        " is not divisible by 2L+1 = " + std::to_string(block_));
    per_axis_ = torus.side() / block_;
    nsites_ = 1;
    for (int k = 0; k < torus.dim(); ++k) nsites_ *= per_axis_;
    build_neighbors();
  }

  const TorusGeometry& torus() const { return *torus_; }
  int scale() const { return scale_; }
  int block_side() const { return block_; }
  int per_axis() const { return per_axis_; }
  int site_count() const { return nsites_; }
  int dim() const { return torus_->dim(); }
  double star_factor() const { return star_factor_; }

  Coords site_coords(Site x) const {
    Coords c(dim());
    for (int k = 0; k < dim(); ++k) {
      c[k] = x % per_axis_;
      x /= per_axis_;
    }
    return c;
  }

  Site site(std::span<const int> k) const {
    Site x = 0;
    for (int a = dim() - 1; a >= 0; --a)
      x = x * per_axis_ + (((k[a] % per_axis_) + per_axis_) % per_axis_);
    return x;
  }

  /// Torus vertex at the centre of the block of site x.
  Vertex center(Site x) const {
    Coords k = site_coords(x);
    Coords c(dim());
    int mid = (per_axis_ - 1) / 2;
    for (int a = 0; a < dim(); ++a) c[a] = (k[a] - mid) * block_;
    return torus_->vertex_centered(c);
  }

  std::vector<Vertex> block_vertices(Site x) const {
    return torus_->ball(center(x), scale_);
  }
  std::vector<Edge> block_edges(Site x) const {
    return torus_->edge_block(center(x), scale_);
  }

  Site site_of_vertex(Vertex v) const {
    Coords c = torus_->centered(v);
    Coords k(dim());
    int mid = (per_axis_ - 1) / 2;
    for (int a = 0; a < dim(); ++a) {
      int q = static_cast<int>(std::floor((c[a] + scale_) / double(block_)));
      k[a] = q + mid;
    }
    return site(k);
  }

  /// Minimal-image coarse offset along one axis.
  int coarse_offset(Site a, Site b, int axis) const {
    int ka = site_coords(a)[axis], kb = site_coords(b)[axis];
    int d = (((kb - ka) % per_axis_) + per_axis_) % per_axis_;
    if (d > per_axis_ / 2) d -= per_axis_;
    return d;
  }

  int graph_distance(Site a, Site b) const {
    int s = 0;
    for (int k = 0; k < dim(); ++k) s += std::abs(coarse_offset(a, b, k));
    return s;
  }

  const std::vector<Site>& neighbors(Site x) const { return nbr_[x]; }

  bool adjacent(Site a, Site b) const {
    return a != b && graph_distance(a, b) == 1;
  }

  /// Distinct sites whose centres are within star_factor * (2L+1) in
  /// Euclidean distance.
  bool star_adjacent(Site a, Site b) const {
    if (a == b) return false;
    double s = 0;
    for (int k = 0; k < dim(); ++k) {
      int o = coarse_offset(a, b, k);
      s += double(o) * o;
    }
    return s <= star_factor_ * star_factor_ + 1e-9;
  }

 private:
  void build_neighbors() {
    nbr_.assign(nsites_, {});
    for (Site x = 0; x < nsites_; ++x) {
      Coords k = site_coords(x);
      std::set<Site> s;
      for (int a = 0; a < dim(); ++a)
        for (int dlt : {-1, 1}) {
          Coords c = k;
          c[a] += dlt;
          Site y = site(c);
          if (y != x) s.insert(y);
        }
      nbr_[x].assign(s.begin(), s.end());
    }
  }

  const TorusGeometry* torus_;
  int scale_;
  double star_factor_;
  int block_ = 1;
  int per_axis_ = 1;
  int nsites_ = 1;
  std::vector<std::vector<Site>> nbr_;
};

inline CoarseLattice coarse_lattice(const TorusGeometry& g, int scale) {
  return CoarseLattice(g, scale);
}

/// Coarse space-time lattice: coarse sites times layers 0..T-1 of length K.
/// Layer j covers dynamics depths [jK, (j+1)K), depth measured backwards
/// from time 0. Site index = layer * |coarse| + spatial site.
class SpaceTimeLattice {
 public:
  SpaceTimeLattice(const CoarseLattice& base, double block_time, int layers)
      : base_(&base), K_(block_time), layers_(layers) {
    require(block_time > 0, "time block length K must be > 0");
    require(layers >= 1, "space-time lattice needs at least one layer");
  }

  const CoarseLattice& base() const { return *base_; }
  double block_time() const { return K_; }
  int layers() const { return layers_; }
  int site_count() const { return layers_ * base_->site_count(); }

  int index(Site spatial, int layer) const {
    return layer * base_->site_count() + spatial;
  }
  Site spatial(int x) const { return x % base_->site_count(); }
  int layer(int x) const { return x / base_->site_count(); }
  double depth_begin(int x) const { return layer(x) * K_; }

  bool adjacent(int a, int b) const {
    if (layer(a) == layer(b)) return base_->adjacent(spatial(a), spatial(b));
    return spatial(a) == spatial(b) && std::abs(layer(a) - layer(b)) == 1;
  }

  int graph_distance(int a, int b) const {
    return base_->graph_distance(spatial(a), spatial(b)) +
           std::abs(layer(a) - layer(b));
  }

  /// Star adjacency with time treated as one more coarse axis.
  bool star_adjacent(int a, int b) const {
    if (a == b) return false;
    int dt = layer(a) - layer(b);
    double s = double(dt) * dt;
    for (int k = 0; k < base_->dim(); ++k) {
      int o = base_->coarse_offset(spatial(a), spatial(b), k);
      s += double(o) * o;
    }
    double f = base_->star_factor();
    return s <= f * f + 1e-9;
  }

  std::vector<int> neighbors(int x) const {
    std::vector<int> out;
    for (Site y : base_->neighbors(spatial(x))) out.push_back(index(y, layer(x)));
    if (layer(x) > 0) out.push_back(x - base_->site_count());
    if (layer(x) + 1 < layers_) out.push_back(x + base_->site_count());
    return out;
  }

 private:
  const CoarseLattice* base_;
  double K_;
  int layers_;
};

/// A nonempty set of coarse sites, kept sorted so equality is set equality.
class Polymer {
 public:
  Polymer() = default;
  explicit Polymer(std::vector<Site> sites) : sites_(std::move(sites)) {
    std::sort(sites_.begin(), sites_.end());
    sites_.erase(std::unique(sites_.begin(), sites_.end()), sites_.end());
  }

  const std::vector<Site>& sites() const { return sites_; }
  std::size_t size() const { return sites_.size(); }
  bool empty() const { return sites_.empty(); }
  bool contains(Site x) const {
    return std::binary_search(sites_.begin(), sites_.end(), x);
  }

  friend bool operator==(const Polymer&, const Polymer&) = default;
  friend auto operator<=>(const Polymer&, const Polymer&) = default;

 private:
  std::vector<Site> sites_;
};

/// Connectivity of a site set under a symmetric adjacency predicate.
template <class Adjacent>
bool is_connected_set(std::span<const int> sites, Adjacent&& adj) {
  if (sites.empty()) return false;
  std::vector<char> seen(sites.size(), 0);
  std::vector<std::size_t> stack{0};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!stack.empty()) {
    std::size_t i = stack.back();
    stack.pop_back();
    for (std::size_t j = 0; j < sites.size(); ++j)
      if (!seen[j] && adj(sites[i], sites[j])) {
        seen[j] = 1;
        ++reached;
        stack.push_back(j);
      }
  }
  return reached == sites.size();
}

inline bool is_connected(const Polymer& p, const CoarseLattice& c) {
  return is_connected_set(p.sites(),
                          [&](Site a, Site b) { return c.adjacent(a, b); });
}

/// True when the union of two polymers is connected (they overlap or touch).
inline bool union_connected(const Polymer& a, const Polymer& b,
                            const CoarseLattice& c) {
  for (Site x : a.sites())
    for (Site y : b.sites())
      if (x == y || c.adjacent(x, y)) return true;
  return false;
}

/// All connected site sets containing `x` with at most `max_size` sites.
/// Output is sorted and duplicate-free.
inline std::vector<Polymer> enumerate_polymers(const CoarseLattice& c, Site x,
                                               int max_size,
                                               std::size_t cap = 2'000'000) {
  require(max_size >= 1, "max_size must be >= 1");
  require(x >= 0 && x < c.site_count(), "site out of range");
  std::set<std::vector<Site>> all;
  std::set<std::vector<Site>> frontier{{x}};
  all.insert({x});
  for (int k = 2; k <= max_size && !frontier.empty(); ++k) {
    std::set<std::vector<Site>> next;
    for (const auto& s : frontier) {
      for (Site y : s)
        for (Site n : c.neighbors(y)) {
          if (std::binary_search(s.begin(), s.end(), n)) continue;
          std::vector<Site> t = s;
          t.insert(std::upper_bound(t.begin(), t.end(), n), n);
          if (all.insert(t).second) {
            next.insert(std::move(t));
            if (all.size() > cap)
              throw CapExceeded("polymer enumeration exceeds cap of " +
                                std::to_string(cap));
          }
        }
    }
    frontier = std::move(next);
  }
  std::vector<Polymer> out;
  out.reserve(all.size());
  for (const auto& s : all) out.emplace_back(s);
  std::sort(out.begin(), out.end());
  return out;
}

/// All polymers of the coarse lattice with at most `max_size` sites.
inline std::vector<Polymer> all_polymers(const CoarseLattice& c, int max_size,
                                         std::size_t cap = 2'000'000) {
  std::set<Polymer> s;
  for (Site x = 0; x < c.site_count(); ++x)
    for (auto& p : enumerate_polymers(c, x, max_size, cap)) s.insert(std::move(p));
  return {s.begin(), s.end()};
}

/// A growth constant c with #{polymers of size k containing a fixed site}
/// <= c^k. Uses the lattice-animal bound e * (max degree) and checks it
/// against enumerated counts for k <= check_up_to.
inline double growth_constant_bound(const CoarseLattice& c, int check_up_to = 5) {
  std::size_t degree = 1;
  for (Site x = 0; x < c.site_count(); ++x)
    degree = std::max(degree, c.neighbors(x).size());
  double bound = std::numbers::e * static_cast<double>(degree);
  int kmax = std::min(check_up_to, c.site_count());
  auto polys = enumerate_polymers(c, 0, kmax);
  std::vector<std::size_t> count(kmax + 1, 0);
  for (const auto& p : polys) ++count[p.size()];
  for (int k = 1; k <= kmax; ++k)
    if (static_cast<double>(count[k]) > std::pow(bound, k))
      throw InvariantViolation("growth constant bound fails at size " +
                               std::to_string(k));
  return bound;
}

}  // namespace rcm

template <>
struct std::hash<rcm::Polymer> {
  std::size_t operator()(const rcm::Polymer& p) const noexcept {
    std::uint64_t h = 0x84222325cbf29ce4ULL;
    for (int s : p.sites()) h = (h ^ static_cast<std::uint64_t>(s)) * 0x100000001b3ULL;
    return static_cast<std::size_t>(h);
  }
};
