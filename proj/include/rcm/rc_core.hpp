#pragma once

// Exact random-cluster, Potts and Ising measures on small regions by
// exhaustive enumeration, with the boundary-condition machinery shared by
// the dynamics.

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rcm/connectivity.hpp"
#include "rcm/errors.hpp"
#include "rcm/geometry.hpp"

namespace rcm {

using cplx = std::complex<double>;

/// Cluster weight q, inverse temperature beta, complex perturbation z of
/// beta, and the Ising field h.
struct ModelParams {
  double q = 2.0;
  double beta = 0.0;
  cplx z{0.0, 0.0};
  double h = 0.0;

  /// e^{beta+z} - 1, the per-open-edge factor of the weight at beta + z.
  cplx edge_factor() const {
    if (z == cplx{}) return cplx{std::expm1(beta), 0.0};
    return std::exp(cplx{beta, 0.0} + z) - 1.0;
  }
  double real_edge_factor() const { return std::expm1(beta); }

  /// alpha_z = (e^{beta+z} - 1) / (e^beta - 1).
  cplx alpha() const {
    if (beta == 0.0) throw ConfigError("alpha_z undefined at beta = 0");
    return edge_factor() / real_edge_factor();
  }

  /// Probability to open an edge whose endpoints are joined elsewhere.
  double p_connected() const { return -std::expm1(-beta); }
  /// Probability to open an edge whose endpoints are not joined elsewhere.
  double p_disconnected() const {
    double f = std::expm1(beta);
    return f / (f + q);
  }

  ModelParams with_z(cplx zz) const {
    ModelParams p = *this;
    p.z = zz;
    return p;
  }
};

/// Boundary condition for an edge region F of a torus. Wired joins every
/// vertex of F touching an edge outside F into one exterior component;
/// Periodic is the whole torus (F must be every edge); Explicit lists the
/// open edges outside F.
struct BoundaryCondition {
  enum class Kind { Free, Wired, Periodic, Explicit };
  Kind kind = Kind::Free;
  std::vector<Edge> open_outside;

  static BoundaryCondition free() { return {Kind::Free, {}}; }
  static BoundaryCondition wired() { return {Kind::Wired, {}}; }
  static BoundaryCondition periodic() { return {Kind::Periodic, {}}; }
  static BoundaryCondition explicit_open(std::vector<Edge> open) {
    std::sort(open.begin(), open.end());
    open.erase(std::unique(open.begin(), open.end()), open.end());
    return {Kind::Explicit, std::move(open)};
  }
};

inline const char* to_string(BoundaryCondition::Kind k) {
  switch (k) {
    case BoundaryCondition::Kind::Free: return "free";
    case BoundaryCondition::Kind::Wired: return "wired";
    case BoundaryCondition::Kind::Periodic: return "periodic";
    case BoundaryCondition::Kind::Explicit: return "explicit";
  }
  return "?";
}

/// A finite edge set of a torus, sorted and duplicate free.
struct EdgeRegion {
  const TorusGeometry* torus = nullptr;
  std::vector<Edge> edges;

  EdgeRegion() = default;
  EdgeRegion(const TorusGeometry& g, std::vector<Edge> e) : torus(&g), edges(std::move(e)) {
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    for (Edge x : edges) require(x >= 0 && x < g.edge_count(), "edge id out of range");
  }
  static EdgeRegion whole(const TorusGeometry& g) { return EdgeRegion(g, g.all_edges()); }

  int size() const { return static_cast<int>(edges.size()); }
  int position(Edge e) const {
    auto it = std::lower_bound(edges.begin(), edges.end(), e);
    return (it != edges.end() && *it == e) ? static_cast<int>(it - edges.begin()) : -1;
  }
  bool contains(Edge e) const { return position(e) >= 0; }
};

/// Open/closed states of the edges of a region, by region position.
class EdgeConfiguration {
 public:
  EdgeConfiguration() = default;
  explicit EdgeConfiguration(std::size_t n, bool open = false)
      : state_(n, open ? 1 : 0), open_(open ? n : 0) {}
  static EdgeConfiguration from_mask(std::size_t n, std::uint64_t mask) {
    EdgeConfiguration c(n);
    for (std::size_t i = 0; i < n; ++i) c.set(i, (mask >> i) & 1U);
    return c;
  }

  std::size_t size() const { return state_.size(); }
  bool operator[](std::size_t i) const { return state_[i] != 0; }
  void set(std::size_t i, bool open) {
    if ((state_[i] != 0) == open) return;
    state_[i] = open ? 1 : 0;
    if (open) ++open_; else --open_;
  }
  /// |omega|, the number of open edges.
  std::size_t open_count() const { return open_; }
  std::span<const std::uint8_t> bits() const { return state_; }
  std::uint64_t mask() const {
    std::uint64_t m = 0;
    for (std::size_t i = 0; i < state_.size() && i < 64; ++i)
      if (state_[i]) m |= std::uint64_t{1} << i;
    return m;
  }
  /// Edgewise order omega <= other.
  bool leq(const EdgeConfiguration& other) const {
    for (std::size_t i = 0; i < state_.size(); ++i)
      if (state_[i] > other.state_[i]) return false;
    return true;
  }

  friend bool operator==(const EdgeConfiguration& a, const EdgeConfiguration& b) {
    return a.state_ == b.state_;
  }

 private:
  std::vector<std::uint8_t> state_;
  std::size_t open_ = 0;
};

struct ClusterCount {
  int kappa = 0;
};

/// The graph on which cluster counts of a region are taken: the vertices
/// V_F touched by the region, its edges, and the permanent links that the
/// boundary condition adds between vertices of V_F.
struct RegionGraph {
  std::vector<Vertex> vertices;                 // V_F, sorted torus ids
  std::vector<std::pair<int, int>> edge_ends;   // per region position, local ids
  std::vector<std::pair<int, int>> links;       // boundary wiring
  int vertex_count() const { return static_cast<int>(vertices.size()); }
};

namespace detail {
inline int local_index(const std::vector<Vertex>& vs, Vertex v) {
  return static_cast<int>(std::lower_bound(vs.begin(), vs.end(), v) - vs.begin());
}
}  // namespace detail

/// Builds the region graph for (F, eta). Wired links every vertex of V_F
/// that touches an outside edge to one exterior representative; Explicit
/// links vertices of V_F joined through the open outside edges.
inline RegionGraph build_region_graph(const EdgeRegion& region,
                                      const BoundaryCondition& bc) {
  const TorusGeometry& g = *region.torus;
  RegionGraph rg;
  for (Edge e : region.edges) {
    auto [a, b] = g.endpoints(e);
    rg.vertices.push_back(a);
    rg.vertices.push_back(b);
  }
  std::sort(rg.vertices.begin(), rg.vertices.end());
  rg.vertices.erase(std::unique(rg.vertices.begin(), rg.vertices.end()), rg.vertices.end());
  for (Edge e : region.edges) {
    auto [a, b] = g.endpoints(e);
    rg.edge_ends.emplace_back(detail::local_index(rg.vertices, a),
                              detail::local_index(rg.vertices, b));
  }
  std::vector<char> in_region(g.edge_count(), 0);
  for (Edge e : region.edges) in_region[e] = 1;

  switch (bc.kind) {
    case BoundaryCondition::Kind::Free:
      break;
    case BoundaryCondition::Kind::Periodic:
      if (region.size() != g.edge_count())
        throw ConfigError("periodic boundary condition requires the whole torus");
      break;
    case BoundaryCondition::Kind::Wired: {
      int rep = -1;
      for (int i = 0; i < rg.vertex_count(); ++i) {
        Vertex v = rg.vertices[i];
        bool touches = false;
        for (int k = 0; k < g.dim() && !touches; ++k)
          touches = !in_region[g.edge(v, k)] || !in_region[g.edge(g.shift(v, k, -1), k)];
        if (!touches) continue;
        if (rep < 0) rep = i;
        else rg.links.emplace_back(rep, i);
      }
      break;
    }
    case BoundaryCondition::Kind::Explicit: {
      UnionFind uf(g.vertex_count());
      for (Edge e : bc.open_outside) {
        if (e < 0 || e >= g.edge_count())
          throw ConfigError("explicit boundary edge outside the torus");
        if (in_region[e])
          throw ConfigError("explicit boundary lists edge " + std::to_string(e) +
                            " inside the region");
        auto [a, b] = g.endpoints(e);
        uf.unite(a, b);
      }
      std::vector<int> first(g.vertex_count(), -1);
      for (int i = 0; i < rg.vertex_count(); ++i) {
        int r = uf.find(rg.vertices[i]);
        if (first[r] < 0) first[r] = i;
        else rg.links.emplace_back(first[r], i);
      }
      break;
    }
  }
  return rg;
}

/// kappa by a from-scratch union-find count. `mask` bit i = region position i.
inline int cluster_count_mask(const RegionGraph& rg, std::uint64_t mask) {
  UnionFind uf(rg.vertex_count());
  for (auto [a, b] : rg.links) uf.unite(a, b);
  for (std::size_t i = 0; i < rg.edge_ends.size(); ++i)
    if ((mask >> i) & 1U) uf.unite(rg.edge_ends[i].first, rg.edge_ends[i].second);
  return uf.components();
}

inline ClusterCount cluster_count(const EdgeRegion& region,
                                  const EdgeConfiguration& omega,
                                  const BoundaryCondition& bc) {
  require(region.size() > 0, "cluster_count needs a nonempty region");
  require(omega.size() == static_cast<std::size_t>(region.size()),
          "configuration does not match region");
  RegionGraph rg = build_region_graph(region, bc);
  UnionFind uf(rg.vertex_count());
  for (auto [a, b] : rg.links) uf.unite(a, b);
  for (std::size_t i = 0; i < omega.size(); ++i)
    if (omega[i]) uf.unite(rg.edge_ends[i].first, rg.edge_ends[i].second);
  return {uf.components()};
}

inline cplx rc_weight_from_counts(std::size_t open, int kappa, const ModelParams& p) {
  cplx f = p.edge_factor();
  return std::pow(f, static_cast<double>(open)) * std::pow(p.q, kappa);
}

/// (e^{beta+z} - 1)^{|omega|} q^{kappa}.
inline cplx rc_weight(const EdgeRegion& region, const EdgeConfiguration& omega,
                      const ModelParams& p, const BoundaryCondition& bc) {
  if (omega.open_count() > 0 && p.z == cplx{} && p.beta == 0.0) return 0.0;
  int kappa = cluster_count(region, omega, bc).kappa;
  return rc_weight_from_counts(omega.open_count(), kappa, p);
}

inline constexpr int kDefaultEdgeCap = 24;

/// Visits every configuration of the region in Gray-code order as
/// visit(mask, kappa). Openings update the union-find incrementally;
/// closings recount from scratch.
inline void check_edge_cap(int m, int cap) {
  if (m > cap || m > 62)
    throw CapExceeded("region of " + std::to_string(m) +
                      " edges exceeds enumeration cap of " + std::to_string(cap));
}

template <class Visit>
void for_each_configuration(const RegionGraph& rg, Visit&& visit,
                            int cap = kDefaultEdgeCap) {
  const int m = static_cast<int>(rg.edge_ends.size());
  check_edge_cap(m, cap);
  UnionFind uf(rg.vertex_count());
  for (auto [a, b] : rg.links) uf.unite(a, b);
  std::uint64_t mask = 0;
  visit(mask, uf.components());
  const std::uint64_t total = std::uint64_t{1} << m;
  for (std::uint64_t i = 1; i < total; ++i) {
    int bit = std::countr_zero(i);
    mask ^= std::uint64_t{1} << bit;
    bool opened = (mask >> bit) & 1U;
    if (opened) {
      uf.unite(rg.edge_ends[bit].first, rg.edge_ends[bit].second);
    } else {
      uf.reset(rg.vertex_count());
      for (auto [a, b] : rg.links) uf.unite(a, b);
      for (int j = 0; j < m; ++j)
        if ((mask >> j) & 1U) uf.unite(rg.edge_ends[j].first, rg.edge_ends[j].second);
    }
    visit(mask, uf.components());
  }
}

/// Number of configurations with k open edges and kappa clusters:
/// counts[k][kappa]. The partition function is a polynomial in
/// (e^{beta+z} - 1) and q with these coefficients.
struct ClusterTable {
  std::vector<std::vector<std::uint64_t>> counts;

  cplx evaluate(const ModelParams& p) const {
    cplx f = p.edge_factor();
    cplx total = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      cplx inner = 0.0;
      for (std::size_t c = 0; c < counts[k].size(); ++c)
        if (counts[k][c]) inner += static_cast<double>(counts[k][c]) * std::pow(p.q, static_cast<int>(c));
      total += (k == 0 ? cplx{1.0} : std::pow(f, static_cast<double>(k))) * inner;
    }
    return total;
  }
};

inline ClusterTable cluster_table(const EdgeRegion& region, const BoundaryCondition& bc,
                                  int cap = kDefaultEdgeCap) {
  RegionGraph rg = build_region_graph(region, bc);
  ClusterTable t;
  t.counts.assign(region.size() + 1, std::vector<std::uint64_t>(rg.vertex_count() + 1, 0));
  for_each_configuration(rg, [&](std::uint64_t mask, int kappa) {
    ++t.counts[std::popcount(mask)][kappa];
  }, cap);
  return t;
}

/// Z^{RC,eta}_{F} by direct summation of weights over all 2^{|F|}
/// configurations.
inline cplx rc_partition(const EdgeRegion& region, const ModelParams& p,
                         const BoundaryCondition& bc, int cap = kDefaultEdgeCap) {
  check_edge_cap(region.size(), cap);
  RegionGraph rg = build_region_graph(region, bc);
  cplx f = p.edge_factor();
  std::vector<cplx> fpow(region.size() + 1, 1.0);
  for (int k = 1; k <= region.size(); ++k) fpow[k] = fpow[k - 1] * f;
  std::vector<double> qpow(rg.vertex_count() + 1, 1.0);
  for (int k = 1; k <= rg.vertex_count(); ++k) qpow[k] = qpow[k - 1] * p.q;
  // Tally (open edges, clusters) first so that each weight is added once
  // per level; summing millions of terms directly loses about 1e-12.
  std::vector<std::uint64_t> tally((region.size() + 1) * (rg.vertex_count() + 1), 0);
  for_each_configuration(rg, [&](std::uint64_t mask, int kappa) {
    ++tally[std::popcount(mask) * (rg.vertex_count() + 1) + kappa];
  }, cap);
  cplx z = 0.0;
  for (int k = 0; k <= region.size(); ++k)
    for (int c = 0; c <= rg.vertex_count(); ++c)
      if (auto t = tally[k * (rg.vertex_count() + 1) + c])
        z += static_cast<double>(t) * fpow[k] * qpow[c];
  return z;
}

/// Weighted average of obs(mask) under the (possibly complex) RC weights.
template <class Observable>
cplx rc_expectation(const EdgeRegion& region, const ModelParams& p,
                    const BoundaryCondition& bc, Observable&& obs,
                    int cap = kDefaultEdgeCap) {
  RegionGraph rg = build_region_graph(region, bc);
  cplx f = p.edge_factor();
  std::vector<cplx> fpow(region.size() + 1, 1.0);
  for (int k = 1; k <= region.size(); ++k) fpow[k] = fpow[k - 1] * f;
  cplx num = 0.0, den = 0.0;
  for_each_configuration(rg, [&](std::uint64_t mask, int kappa) {
    cplx w = fpow[std::popcount(mask)] * std::pow(p.q, kappa);
    den += w;
    num += w * cplx(obs(mask));
  }, cap);
  return num / den;
}

/// phi(g_A) with g_A the indicator that every edge of A is open.
inline cplx observable_expectation(const EdgeRegion& region, std::span<const Edge> A,
                                   const ModelParams& p, const BoundaryCondition& bc,
                                   int cap = kDefaultEdgeCap) {
  std::uint64_t need = 0;
  for (Edge e : A) {
    int pos = region.position(e);
    require(pos >= 0, "observable edge outside region");
    need |= std::uint64_t{1} << pos;
  }
  return rc_expectation(region, p, bc,
                        [need](std::uint64_t m) { return (m & need) == need ? 1.0 : 0.0; },
                        cap);
}

/// G(z) = phi_beta(alpha_z^{|omega|}) = Z(beta+z) / Z(beta).
inline cplx tilted_expectation(const EdgeRegion& region, const ModelParams& p,
                               const BoundaryCondition& bc, int cap = kDefaultEdgeCap) {
  ModelParams real = p.with_z(0.0);
  cplx alpha = p.alpha();
  return rc_expectation(region, real, bc,
                        [alpha](std::uint64_t m) {
                          return std::pow(alpha, static_cast<double>(std::popcount(m)));
                        },
                        cap);
}

/// Exact law of the configuration restricted to the positions in `window`
/// (bit i of the returned index = window[i]). Real beta only.
inline std::vector<double> rc_marginal(const EdgeRegion& region, std::span<const int> window,
                                       const ModelParams& p, const BoundaryCondition& bc,
                                       int cap = kDefaultEdgeCap) {
  RegionGraph rg = build_region_graph(region, bc);
  double f = p.real_edge_factor();
  std::vector<double> law(std::size_t{1} << window.size(), 0.0);
  double total = 0.0;
  for_each_configuration(rg, [&](std::uint64_t mask, int kappa) {
    double w = std::pow(f, std::popcount(mask)) * std::pow(p.q, kappa);
    std::size_t idx = 0;
    for (std::size_t i = 0; i < window.size(); ++i)
      if ((mask >> window[i]) & 1U) idx |= std::size_t{1} << i;
    law[idx] += w;
    total += w;
  }, cap);
  for (double& x : law) x /= total;
  return law;
}

/// phi(omega_e = 1 | omega off e), from the two weights that differ at e.
inline double conditional_open_probability(const RegionGraph& rg, std::uint64_t mask,
                                           int position, const ModelParams& p) {
  std::uint64_t with = mask | (std::uint64_t{1} << position);
  std::uint64_t without = mask & ~(std::uint64_t{1} << position);
  double f = p.real_edge_factor();
  double wo = std::pow(f, std::popcount(with)) * std::pow(p.q, cluster_count_mask(rg, with));
  double wc = std::pow(f, std::popcount(without)) * std::pow(p.q, cluster_count_mask(rg, without));
  return wo / (wo + wc);
}

// Spin models.

/// Boundary condition for spin models on a vertex region: Free (no boundary
/// terms), Periodic (the region is the whole torus), or Fixed (every
/// exterior neighbour has spin `value`; Potts colour in [0,q), Ising +-1).
struct SpinBoundary {
  enum class Kind { Free, Periodic, Fixed };
  Kind kind = Kind::Free;
  int value = 0;

  static SpinBoundary free() { return {Kind::Free, 0}; }
  static SpinBoundary periodic() { return {Kind::Periodic, 0}; }
  static SpinBoundary fixed(int v) { return {Kind::Fixed, v}; }
};

struct VertexRegion {
  const TorusGeometry* torus = nullptr;
  std::vector<Vertex> vertices;

  VertexRegion() = default;
  VertexRegion(const TorusGeometry& g, std::vector<Vertex> v) : torus(&g), vertices(std::move(v)) {
    std::sort(vertices.begin(), vertices.end());
    vertices.erase(std::unique(vertices.begin(), vertices.end()), vertices.end());
  }
  static VertexRegion whole(const TorusGeometry& g) {
    std::vector<Vertex> v(g.vertex_count());
    for (int i = 0; i < g.vertex_count(); ++i) v[i] = i;
    return VertexRegion(g, std::move(v));
  }
};

/// Interaction structure of a vertex region: edges with both ends inside
/// and, per vertex, the number of edges to the exterior.
struct SpinGraph {
  std::vector<std::pair<int, int>> internal;
  std::vector<int> boundary_degree;
  int boundary_edges = 0;
};

inline SpinGraph build_spin_graph(const VertexRegion& r, const SpinBoundary& bc) {
  const TorusGeometry& g = *r.torus;
  if (bc.kind == SpinBoundary::Kind::Periodic &&
      static_cast<int>(r.vertices.size()) != g.vertex_count())
    throw ConfigError("periodic spin boundary requires the whole torus");
  SpinGraph sg;
  sg.boundary_degree.assign(r.vertices.size(), 0);
  auto inside = [&](Vertex v) {
    return std::binary_search(r.vertices.begin(), r.vertices.end(), v);
  };
  for (Edge e = 0; e < g.edge_count(); ++e) {
    auto [a, b] = g.endpoints(e);
    bool ia = inside(a), ib = inside(b);
    if (ia && ib) {
      sg.internal.emplace_back(detail::local_index(r.vertices, a),
                               detail::local_index(r.vertices, b));
    } else if (ia || ib) {
      ++sg.boundary_degree[detail::local_index(r.vertices, ia ? a : b)];
      ++sg.boundary_edges;
    }
  }
  return sg;
}

/// |E_V|: edges carrying an interaction term (internal, plus exterior edges
/// under a fixed boundary).
inline int interacting_edge_count(const VertexRegion& r, const SpinBoundary& bc) {
  SpinGraph sg = build_spin_graph(r, bc);
  return static_cast<int>(sg.internal.size()) +
         (bc.kind == SpinBoundary::Kind::Fixed ? sg.boundary_edges : 0);
}

inline constexpr std::uint64_t kDefaultSpinCap = std::uint64_t{1} << 24;

inline double potts_partition(const VertexRegion& r, const ModelParams& p,
                              const SpinBoundary& bc, std::uint64_t cap = kDefaultSpinCap) {
  if (p.q < 2 || p.q != std::floor(p.q))
    throw ConfigError("Potts model needs an integer q >= 2");
  const int q = static_cast<int>(p.q);
  const int n = static_cast<int>(r.vertices.size());
  long double states = std::pow(static_cast<long double>(q), n);
  if (states > static_cast<long double>(cap))
    throw CapExceeded("Potts enumeration of " + std::to_string(n) + " spins exceeds cap");
  if (bc.kind == SpinBoundary::Kind::Fixed && (bc.value < 0 || bc.value >= q))
    throw ConfigError("fixed Potts boundary colour out of range");
  SpinGraph sg = build_spin_graph(r, bc);
  std::vector<int> sigma(n, 0);
  int max_agree = static_cast<int>(sg.internal.size());
  for (int d : sg.boundary_degree) max_agree += d;
  std::vector<std::uint64_t> levels(max_agree + 1, 0);
  const std::uint64_t count = static_cast<std::uint64_t>(states);
  for (std::uint64_t s = 0; s < count; ++s) {
    int agree = 0;
    for (auto [a, b] : sg.internal) agree += sigma[a] == sigma[b];
    if (bc.kind == SpinBoundary::Kind::Fixed)
      for (int i = 0; i < n; ++i)
        if (sigma[i] == bc.value) agree += sg.boundary_degree[i];
    ++levels[agree];
    for (int i = 0; i < n; ++i) {
      if (++sigma[i] < q) break;
      sigma[i] = 0;
    }
  }
  // Integer powers of e^beta keep integer-valued cases exact.
  const double e_beta = std::exp(p.beta);
  double total = 0.0;
  for (int a = 0; a <= max_agree; ++a)
    if (levels[a]) total += static_cast<double>(levels[a]) * std::pow(e_beta, a);
  return total;
}

inline double ising_partition(const VertexRegion& r, const ModelParams& p,
                              const SpinBoundary& bc, std::uint64_t cap = kDefaultSpinCap) {
  const int n = static_cast<int>(r.vertices.size());
  if (n >= 63 || (std::uint64_t{1} << n) > cap)
    throw CapExceeded("Ising enumeration of " + std::to_string(n) + " spins exceeds cap");
  if (bc.kind == SpinBoundary::Kind::Fixed && bc.value != 1 && bc.value != -1)
    throw ConfigError("fixed Ising boundary spin must be +1 or -1");
  SpinGraph sg = build_spin_graph(r, bc);
  // Histogram of (bond + boundary energy, magnetization), both integers.
  const int emax = static_cast<int>(sg.internal.size()) +
                   (bc.kind == SpinBoundary::Kind::Fixed ? sg.boundary_edges : 0);
  const int ew = 2 * emax + 1, mw = 2 * n + 1;
  std::vector<std::uint64_t> levels(static_cast<std::size_t>(ew) * mw, 0);
  for (std::uint64_t s = 0; s < (std::uint64_t{1} << n); ++s) {
    auto spin = [s](int i) { return ((s >> i) & 1U) ? -1 : 1; };
    int bond = 0, mag = 0, bdry = 0;
    for (auto [a, b] : sg.internal) bond += spin(a) * spin(b);
    for (int i = 0; i < n; ++i) {
      mag += spin(i);
      if (bc.kind == SpinBoundary::Kind::Fixed) bdry += spin(i) * bc.value * sg.boundary_degree[i];
    }
    ++levels[static_cast<std::size_t>(bond + bdry + emax) * mw + (mag + n)];
  }
  const double e_beta = std::exp(p.beta), e_h = std::exp(p.h);
  double total = 0.0;
  for (int e = -emax; e <= emax; ++e)
    for (int m = -n; m <= n; ++m)
      if (auto c = levels[static_cast<std::size_t>(e + emax) * mw + (m + n)])
        total += static_cast<double>(c) * std::pow(e_beta, e) * std::pow(e_h, m);
  return total;
}

struct IdentityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double discrepancy = 0.0;  // |lhs - rhs| / |rhs|
};

/// Z^{RC,per} against Z^{Potts,per} on the torus (d, N).
inline IdentityCheck es_identity_check(int dim, int half_side, const ModelParams& p,
                                       int cap = kDefaultEdgeCap) {
  TorusGeometry g(dim, half_side);
  double zrc = rc_partition(EdgeRegion::whole(g), p.with_z(0.0), BoundaryCondition::periodic(), cap).real();
  double zp = potts_partition(VertexRegion::whole(g), p, SpinBoundary::periodic());
  return {zrc, zp, std::abs(zrc - zp) / std::abs(zp)};
}

/// Ising at beta with h = 0 against e^{-beta |E_V|} times Potts (q = 2) at
/// `potts_beta`. With potts_beta = 2 beta this is an identity; the other
/// candidate (potts_beta = beta) is what one gets by reading the relation
/// with equal temperatures.
inline IdentityCheck ising_potts_bridge(const VertexRegion& r, double beta, double potts_beta,
                                        const SpinBoundary& ising_bc) {
  ModelParams ip;
  ip.beta = beta;
  double zi = ising_partition(r, ip, ising_bc);
  SpinBoundary pbc = ising_bc;
  if (pbc.kind == SpinBoundary::Kind::Fixed) pbc.value = ising_bc.value == 1 ? 0 : 1;
  ModelParams pp;
  pp.q = 2;
  pp.beta = potts_beta;
  double rhs = std::exp(-beta * interacting_edge_count(r, ising_bc)) * potts_partition(r, pp, pbc);
  return {zi, rhs, std::abs(zi - rhs) / std::abs(zi)};
}

}  // namespace rcm
