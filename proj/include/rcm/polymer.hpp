#pragma once

// Abstract hard-core polymer models and their cluster expansion, plus the
// concrete weights built from block functions f_x and information clusters.

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rcm/coarse.hpp"
#include "rcm/rc_core.hpp"

namespace rcm {

/// A finite polymer universe with complex weights and a symmetric 0/1
/// compatibility matrix (0 = incompatible). Every polymer is incompatible
/// with itself.
class PolymerModel {
 public:
  PolymerModel() = default;

  PolymerModel(std::vector<cplx> weights, std::vector<std::vector<std::uint8_t>> compatible)
      : w_(std::move(weights)), delta_(std::move(compatible)) {
    const std::size_t n = w_.size();
    require(delta_.size() == n, "compatibility matrix size mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      require(delta_[i].size() == n, "compatibility matrix must be square");
      require(delta_[i][i] == 0, "a polymer must be incompatible with itself");
      for (std::size_t j = 0; j < n; ++j) {
        require(delta_[i][j] <= 1, "compatibility entries must be 0 or 1");
        require(delta_[i][j] == delta_[j][i], "compatibility must be symmetric");
      }
    }
  }

  /// Hard-core model on coarse-lattice polymers: two polymers are
  /// incompatible when their union is connected.
  static PolymerModel geometric(const CoarseLattice& c, std::vector<Polymer> polymers,
                                std::vector<cplx> weights) {
    require(polymers.size() == weights.size(), "one weight per polymer");
    const std::size_t n = polymers.size();
    std::vector<std::vector<std::uint8_t>> d(n, std::vector<std::uint8_t>(n, 1));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i; j < n; ++j) {
        bool inc = i == j || union_connected(polymers[i], polymers[j], c);
        d[i][j] = d[j][i] = inc ? 0 : 1;
      }
    PolymerModel m(std::move(weights), std::move(d));
    m.polymers_ = std::move(polymers);
    return m;
  }

  std::size_t size() const { return w_.size(); }
  cplx weight(std::size_t i) const { return w_[i]; }
  const std::vector<cplx>& weights() const { return w_; }
  void set_weights(std::vector<cplx> w) {
    require(w.size() == w_.size(), "weight vector size mismatch");
    w_ = std::move(w);
  }
  bool compatible(std::size_t i, std::size_t j) const { return delta_[i][j] != 0; }
  int delta(std::size_t i, std::size_t j) const { return delta_[i][j]; }
  const std::vector<std::vector<std::uint8_t>>& compatibility() const { return delta_; }
  const std::vector<Polymer>& polymers() const { return polymers_; }

 private:
  std::vector<cplx> w_;
  std::vector<std::vector<std::uint8_t>> delta_;
  std::vector<Polymer> polymers_;
};

inline constexpr int kUrsellLiteralCap = 8;
inline constexpr int kUrsellRecursionCap = 12;

namespace detail {

inline double factorial(int n) {
  double f = 1;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

/// Sum over connected spanning subgraphs G of the incompatibility graph of
/// (-1)^{|E_G|}, by the recursion f(S) = sum_{T contains min S} c(T) f(S\T)
/// where f(S) is 1 when S is pairwise compatible and 0 otherwise.
inline double connected_sum(int n, const std::vector<std::uint32_t>& incompatible) {
  const std::uint32_t full = (std::uint32_t{1} << n) - 1;
  std::vector<double> f(full + 1), c(full + 1, 0.0);
  for (std::uint32_t S = 0; S <= full; ++S) {
    bool ok = true;
    for (int i = 0; i < n && ok; ++i)
      if ((S >> i) & 1U) ok = (incompatible[i] & S) == 0;
    f[S] = ok ? 1.0 : 0.0;
  }
  for (std::uint32_t S = 1; S <= full; ++S) {
    std::uint32_t low = S & (~S + 1);
    std::uint32_t rest = S ^ low;
    double acc = 0.0;
    // Proper subsets T of S that contain the lowest element.
    for (std::uint32_t sub = (rest - 1) & rest;; sub = (sub - 1) & rest) {
      std::uint32_t T = sub | low;
      if (T != S) acc += c[T] * f[S ^ T];
      if (sub == 0) break;
    }
    c[S] = f[S] - acc;
  }
  return c[full];
}

inline std::vector<std::uint32_t> incompatibility_masks(std::span<const std::size_t> tuple,
                                                        const PolymerModel& m) {
  const int n = static_cast<int>(tuple.size());
  std::vector<std::uint32_t> inc(n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && !m.compatible(tuple[i], tuple[j])) inc[i] |= std::uint32_t{1} << j;
  return inc;
}

}  // namespace detail

/// Ursell function U(gamma_1..gamma_n) = (1/n!) sum over connected spanning
/// subgraphs G of K_n of prod_{ij in G} (delta_ij - 1).
inline double ursell(std::span<const std::size_t> tuple, const PolymerModel& m) {
  const int n = static_cast<int>(tuple.size());
  require(n >= 1, "Ursell function needs at least one polymer");
  if (n > kUrsellRecursionCap) throw CapExceeded("Ursell tuple longer than " + std::to_string(kUrsellRecursionCap));
  for (auto i : tuple) require(i < m.size(), "polymer index out of range");
  return detail::connected_sum(n, detail::incompatibility_masks(tuple, m)) / detail::factorial(n);
}

/// The same quantity by literally summing over all 2^{n(n-1)/2} edge
/// subsets of K_n; the reference for the recursion.
inline double ursell_literal(std::span<const std::size_t> tuple, const PolymerModel& m) {
  const int n = static_cast<int>(tuple.size());
  require(n >= 1, "Ursell function needs at least one polymer");
  if (n > kUrsellLiteralCap) throw CapExceeded("literal Ursell sum capped at n = 8");
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  const std::uint64_t total = std::uint64_t{1} << pairs.size();
  double sum = 0.0;
  for (std::uint64_t g = 0; g < total; ++g) {
    double prod = 1.0;
    UnionFind uf(n);
    for (std::size_t k = 0; k < pairs.size() && prod != 0.0; ++k)
      if ((g >> k) & 1U) {
        prod *= m.delta(tuple[pairs[k].first], tuple[pairs[k].second]) - 1;
        uf.unite(pairs[k].first, pairs[k].second);
      }
    if (prod != 0.0 && uf.components() == 1) sum += prod;
  }
  return sum / detail::factorial(n);
}

inline constexpr std::size_t kPartitionExactCap = 20;

/// Sum over pairwise-compatible subsets of the product of weights.
inline cplx polymer_partition_exact(const PolymerModel& m) {
  const std::size_t n = m.size();
  if (n > kPartitionExactCap) throw CapExceeded("exact polymer partition function capped at 20 polymers");
  std::vector<std::uint32_t> inc(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (!m.compatible(i, j)) inc[i] |= std::uint32_t{1} << j;
  // Depth-first over polymers in index order, keeping the set of polymers
  // still allowed.
  std::function<cplx(std::size_t, std::uint32_t)> rec = [&](std::size_t i, std::uint32_t blocked) -> cplx {
    if (i == n) return 1.0;
    cplx without = rec(i + 1, blocked);
    if ((blocked >> i) & 1U) return without;
    return without + m.weight(i) * rec(i + 1, blocked | inc[i]);
  };
  return rec(0, 0);
}

/// Partial sums of the cluster expansion of log Z, by order.
struct SeriesResult {
  std::vector<cplx> order_terms;   // index k-1 holds the order-k contribution
  std::vector<cplx> partial_sums;  // cumulative
  std::vector<double> abs_terms;   // sum of |term| per order, possibly beyond max_order
  std::vector<cplx> gradient;      // d(partial sum at max_order)/d w_j
  int max_order = 0;

  cplx value() const { return partial_sums.empty() ? cplx{} : partial_sums.back(); }

  /// Bound on |log Z - partial sum at `order`|: the absolute order sums
  /// computed beyond `order`, plus a geometric tail. The tail ratio is the
  /// largest of the last few term ratios and of their linear extrapolation
  /// in 1/n, so slowly rising ratios (log(1+x)-like series) are not
  /// underestimated. Infinite when that ratio is not below one.
  double envelope(int order) const {
    int K = static_cast<int>(abs_terms.size());
    require(order >= 0 && order <= K, "envelope order out of range");
    double s = 0.0;
    for (int k = order + 1; k <= K; ++k) s += abs_terms[k - 1];
    if (K < 2) return abs_terms.empty() || abs_terms.back() == 0.0 ? s : std::numeric_limits<double>::infinity();
    double last = abs_terms[K - 1], prev = abs_terms[K - 2];
    if (last == 0.0) return s;
    double r = prev > 0 ? last / prev : std::numeric_limits<double>::infinity();
    for (int k = std::max(2, K - 2); k <= K; ++k)
      if (abs_terms[k - 2] > 0) r = std::max(r, abs_terms[k - 1] / abs_terms[k - 2]);
    if (K >= 3 && abs_terms[K - 3] > 0 && prev > 0) {
      double rk = last / prev, rk1 = prev / abs_terms[K - 3];
      r = std::max(r, K * rk - (K - 1) * rk1);
    }
    if (!(r < 1.0)) return std::numeric_limits<double>::infinity();
    return s + last * r / (1.0 - r);
  }
};

inline constexpr int kSeriesOrderCap = 8;

struct SeriesOptions {
  int extra_orders = 2;           // absolute sums computed past max_order for the envelope
  std::size_t cluster_cap = 50'000'000;
  bool with_gradient = true;
};

/// Cluster expansion truncated at `max_order`, summing over multisets of
/// polymers with the exact symmetry factor 1/prod m_i!.
inline SeriesResult cluster_expansion_logZ(const PolymerModel& m, int max_order, SeriesOptions opt = {}) {
  require(max_order >= 1, "max_order must be >= 1");
  if (max_order > kSeriesOrderCap) throw CapExceeded("series order capped at 8");
  const int top = std::min(max_order + std::max(0, opt.extra_orders), kUrsellRecursionCap);
  const std::size_t n = m.size();

  SeriesResult r;
  r.max_order = max_order;
  r.order_terms.assign(max_order, 0.0);
  r.abs_terms.assign(top, 0.0);
  if (opt.with_gradient) r.gradient.assign(n, 0.0);

  // Ursell numerators c(tuple) cached by (length, incompatibility pattern).
  std::unordered_map<std::uint64_t, double> cache;
  std::vector<std::size_t> tuple;
  std::vector<int> mult(n, 0);
  std::size_t visited = 0;

  std::function<void(std::size_t)> rec = [&](std::size_t from) {
    const int k = static_cast<int>(tuple.size());
    if (k >= 1) {
      if (++visited > opt.cluster_cap) throw CapExceeded("cluster enumeration exceeds cap");
      auto inc = detail::incompatibility_masks(tuple, m);
      // Connected incompatibility graph is required for a nonzero term.
      std::uint32_t reach = 1, frontier = 1;
      while (frontier) {
        std::uint32_t next = 0;
        for (int i = 0; i < k; ++i)
          if ((frontier >> i) & 1U) next |= inc[i];
        frontier = next & ~reach;
        reach |= next;
      }
      if (reach == (std::uint32_t{1} << k) - 1) {
        std::uint64_t key = static_cast<std::uint64_t>(k);
        int bit = 4;
        for (int i = 0; i < k; ++i)
          for (int j = i + 1; j < k; ++j, ++bit)
            if ((inc[i] >> j) & 1U) key |= std::uint64_t{1} << bit;
        auto it = cache.find(key);
        double c = it != cache.end() ? it->second : (cache[key] = detail::connected_sum(k, inc));
        if (c != 0.0) {
          double sym = 1.0;
          cplx prod = 1.0;
          double aprod = 1.0;
          for (std::size_t i : tuple) aprod *= std::abs(m.weight(i));
          for (std::size_t j = 0; j < n; ++j) sym *= detail::factorial(mult[j]);
          r.abs_terms[k - 1] += std::abs(c) / sym * aprod;
          if (k <= max_order) {
            for (std::size_t i : tuple) prod *= m.weight(i);
            r.order_terms[k - 1] += c / sym * prod;
            if (opt.with_gradient) {
              std::size_t last = n;
              for (std::size_t idx = 0; idx < tuple.size(); ++idx) {
                std::size_t j = tuple[idx];
                if (j == last) continue;
                last = j;
                cplx rest = 1.0;
                bool skipped = false;
                for (std::size_t i : tuple) {
                  if (i == j && !skipped) {
                    skipped = true;
                    continue;
                  }
                  rest *= m.weight(i);
                }
                r.gradient[j] += c / sym * double(mult[j]) * rest;
              }
            }
          }
        }
      }
    }
    if (k == top) return;
    for (std::size_t j = from; j < n; ++j) {
      tuple.push_back(j);
      ++mult[j];
      rec(j);
      --mult[j];
      tuple.pop_back();
    }
  };
  rec(0);

  cplx acc = 0.0;
  for (const auto& t : r.order_terms) {
    acc += t;
    r.partial_sums.push_back(acc);
  }
  return r;
}

/// Outcome of the convergence criterion sum_gamma e^{g(gamma)} |w(gamma)|
/// |delta(gamma, gamma') - 1| <= g(gamma') for every gamma'.
struct KPResult {
  bool ok = true;
  std::vector<double> slack;  // g(gamma') minus the left side
  double worst_slack = std::numeric_limits<double>::infinity();
  std::size_t worst = 0;
};

inline KPResult kp_convergence_check(const PolymerModel& m, std::span<const double> g,
                                     std::span<const double> weight_bound = {}) {
  const std::size_t n = m.size();
  require(g.size() == n, "one g value per polymer");
  require(weight_bound.empty() || weight_bound.size() == n, "one weight bound per polymer");
  for (double v : g) require(v > 0, "g must be positive");
  KPResult r;
  r.slack.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    double lhs = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!m.compatible(i, j)) {
        double w = weight_bound.empty() ? std::abs(m.weight(i)) : weight_bound[i];
        lhs += std::exp(g[i]) * w;
      }
    r.slack[j] = g[j] - lhs;
    if (r.slack[j] < r.worst_slack) {
      r.worst_slack = r.slack[j];
      r.worst = j;
    }
    if (r.slack[j] < 0) r.ok = false;
  }
  if (n == 0) r.worst_slack = 0.0;
  return r;
}

/// Tries g(gamma) = kappa * |gamma| (size 1 for abstract polymers) over a
/// grid of kappa and returns the first passing result, or the best failing
/// one.
inline KPResult kp_search_linear(const PolymerModel& m, std::span<const double> weight_bound = {},
                                 std::span<const int> sizes = {}) {
  KPResult best;
  best.ok = false;
  best.worst_slack = -std::numeric_limits<double>::infinity();
  for (int step = 1; step <= 200; ++step) {
    double kappa = 0.02 * step;
    std::vector<double> g(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) g[i] = kappa * (sizes.empty() ? 1 : sizes[i]);
    KPResult r = kp_convergence_check(m, g, weight_bound);
    if (r.ok) return r;
    if (r.worst_slack > best.worst_slack) best = r;
  }
  return best;
}

// Concrete weights from the space-time coupling.

/// f_x(omega) = alpha_z^{|omega cap E_L(x)|} - 1, with `open` indexed by
/// torus edge.
inline cplx block_function_f(std::span<const std::uint8_t> open, const CoarseLattice& c, Site x,
                             const ModelParams& p) {
  require(open.size() == static_cast<std::size_t>(c.torus().edge_count()),
          "configuration must cover every torus edge");
  if (p.z == cplx{}) return 0.0;
  int count = 0;
  for (Edge e : c.block_edges(x)) count += open[e] ? 1 : 0;
  return std::pow(p.alpha(), count) - 1.0;
}

/// Modified block function alpha_z^{|omega cap E_L(x)|} g_{A cap E_L(x)} - 1,
/// where g_B is the indicator that every edge of B is open.
inline cplx modified_block_function(std::span<const std::uint8_t> open, const CoarseLattice& c, Site x,
                                    const ModelParams& p, std::span<const Edge> A) {
  int count = 0;
  bool all_open = true;
  auto block = c.block_edges(x);
  for (Edge e : block) count += open[e] ? 1 : 0;
  for (Edge e : A)
    if (std::binary_search(block.begin(), block.end(), e) && !open[e]) all_open = false;
  cplx a = p.z == cplx{} ? cplx{1.0} : std::pow(p.alpha(), count);
  return (all_open ? a : cplx{0.0}) - 1.0;
}

/// One draw of the coupling: a configuration on every torus edge and, for
/// each coarse site x, the spatial information cluster C_x (contains x).
struct CouplingSample {
  std::vector<std::uint8_t> omega;
  std::vector<std::vector<Site>> clusters;
  double weight = 1.0;  // probability for exact enumerations, 1 for draws
};

enum class CouplingKind { Graphical, Planted };

/// Setting of the coupling: torus, scale, coarse-graining parameters and
/// the real model parameters.
struct CouplingSetup {
  int dim = 1;
  int half_side = 4;
  CoarseParams coarse;
  int layers = 4;
  GoodMode mode = GoodMode::Close;
  ModelParams params;  // real; z enters only through f
  CouplingKind kind = CouplingKind::Graphical;
  DoublingPolicy cftp;
};

/// Draws replica r. The configuration is an exact sample of the periodic
/// measure by CFTP on the whole torus; in the graphical coupling the
/// clusters are read off the classification of the same per-edge streams,
/// in the planted coupling C_x = {x}. Throws NotCoalesced at the cap.
inline CouplingSample draw_coupling(const CouplingSetup& s, const TorusGeometry& g, const CoarseLattice& c,
                                    std::uint64_t seed, std::uint64_t r) {
  CouplingSample out;
  EdgeRegion whole = EdgeRegion::whole(g);
  auto res = cftp_sample({seed, r}, whole, whole.edges, s.params, BoundaryCondition::periodic(), s.cftp);
  if (!res.coalesced) throw NotCoalesced("coupling sampler: torus CFTP hit the horizon cap");
  out.omega.assign(res.sample.bits().begin(), res.sample.bits().end());
  const int n0 = c.site_count();
  out.clusters.resize(n0);
  if (s.kind == CouplingKind::Planted) {
    for (Site x = 0; x < n0; ++x) out.clusters[x] = {x};
    return out;
  }
  SpaceTimeLattice st(c, s.coarse.K(), s.layers);
  ClassificationField f = classify_field(StreamKey{seed, r}, st, s.coarse, s.mode, s.params);
  std::vector<int> anchors(n0);
  std::iota(anchors.begin(), anchors.end(), 0);
  auto cls = extract_clusters(f, anchors);
  for (Site x = 0; x < n0; ++x) out.clusters[x] = cls[x].spatial;
  return out;
}

inline std::vector<CouplingSample> draw_couplings(const CouplingSetup& s, const TorusGeometry& g,
                                                  const CoarseLattice& c, std::size_t samples,
                                                  std::uint64_t seed, unsigned threads = 1) {
  return parallel_map<CouplingSample>(samples, [&](std::size_t r) { return draw_coupling(s, g, c, seed, r); },
                                      threads);
}

/// Exact planted coupling: every torus configuration with its probability
/// under the periodic measure, and C_x = {x}.
inline std::vector<CouplingSample> planted_exact(const TorusGeometry& g, const CoarseLattice& c,
                                                 const ModelParams& p, int cap = kDefaultEdgeCap) {
  EdgeRegion whole = EdgeRegion::whole(g);
  RegionGraph rg = build_region_graph(whole, BoundaryCondition::periodic());
  std::vector<CouplingSample> out;
  double total = 0.0;
  const double f = p.real_edge_factor();
  for_each_configuration(rg, [&](std::uint64_t mask, int kappa) {
    CouplingSample s;
    s.omega.resize(whole.size());
    for (int i = 0; i < whole.size(); ++i) s.omega[whole.edges[i]] = (mask >> i) & 1U;
    s.weight = std::pow(f, std::popcount(mask)) * std::pow(p.q, kappa);
    total += s.weight;
    s.clusters.resize(c.site_count());
    for (Site x = 0; x < c.site_count(); ++x) s.clusters[x] = {x};
    out.push_back(std::move(s));
  }, cap);
  for (auto& s : out) s.weight /= total;
  return out;
}

enum class EstimatorVariant { Exact, MonteCarlo };

struct WeightEstimate {
  Polymer polymer;
  cplx z{};
  cplx value{};
  double std_error = 0.0;
  std::size_t samples = 0;
  EstimatorVariant variant = EstimatorVariant::MonteCarlo;
};

/// Per-sample contributions X_s(gamma) = sum over nonempty A subset of
/// gamma with the union of C_x (x in A) equal to gamma of prod_{x in A}
/// f_x. `f_of(sample, x)` supplies the block function.
template <class BlockFn>
std::vector<std::vector<cplx>> weight_contributions(std::span<const CouplingSample> samples,
                                                    std::span<const Polymer> polymers, BlockFn&& f_of) {
  for (const auto& g : polymers)
    if (g.size() > 12) throw CapExceeded("weight estimation capped at polymers of 12 sites");
  std::vector<std::vector<cplx>> X(samples.size(), std::vector<cplx>(polymers.size(), 0.0));
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& smp = samples[s];
    std::unordered_map<Site, cplx> fcache;
    auto fx = [&](Site x) {
      auto it = fcache.find(x);
      if (it != fcache.end()) return it->second;
      return fcache[x] = f_of(smp, x);
    };
    for (std::size_t k = 0; k < polymers.size(); ++k) {
      const auto& sites = polymers[k].sites();
      const int m = static_cast<int>(sites.size());
      std::vector<cplx> fv(m);
      for (int i = 0; i < m; ++i) fv[i] = fx(sites[i]);
      cplx sum = 0.0;
      for (std::uint32_t A = 1; A < (std::uint32_t{1} << m); ++A) {
        cplx prod = 1.0;
        for (int i = 0; i < m && prod != cplx{}; ++i)
          if ((A >> i) & 1U) prod *= fv[i];
        if (prod == cplx{}) continue;
        std::vector<Site> u;
        for (int i = 0; i < m; ++i)
          if ((A >> i) & 1U) u.insert(u.end(), smp.clusters[sites[i]].begin(), smp.clusters[sites[i]].end());
        std::sort(u.begin(), u.end());
        u.erase(std::unique(u.begin(), u.end()), u.end());
        if (u == sites) sum += prod;
      }
      X[s][k] = sum;
    }
  }
  return X;
}

/// Translation classes of a polymer list on the coarse torus.
inline std::vector<std::size_t> translation_classes(const CoarseLattice& c, std::span<const Polymer> polymers) {
  const int d = c.dim(), m = c.per_axis();
  auto translate = [&](const Polymer& g, const Coords& shift) {
    std::vector<Site> out;
    for (Site x : g.sites()) {
      Coords k = c.site_coords(x);
      for (int a = 0; a < d; ++a) k[a] = (k[a] + shift[a]) % m;
      out.push_back(c.site(k));
    }
    return Polymer(std::move(out));
  };
  std::vector<std::size_t> cls(polymers.size());
  std::map<Polymer, std::size_t> canon_id;
  for (std::size_t i = 0; i < polymers.size(); ++i) {
    Polymer best = polymers[i];
    for (Site t = 0; t < c.site_count(); ++t) {
      Polymer q = translate(polymers[i], c.site_coords(t));
      if (q < best) best = q;
    }
    auto [it, fresh] = canon_id.emplace(best, canon_id.size());
    cls[i] = it->second;
  }
  return cls;
}

/// Weights from sample contributions: probability-weighted for exact
/// enumerations, plain means with standard errors for draws. With
/// `symmetrize`, contributions are averaged over translation classes
/// sample by sample first.
struct WeightTable {
  std::vector<Polymer> polymers;
  std::vector<cplx> values;
  std::vector<double> std_errors;
  std::vector<std::vector<cplx>> contributions;  // per sample, after symmetrization
  std::vector<double> sample_weights;
  EstimatorVariant variant = EstimatorVariant::MonteCarlo;
};

inline WeightTable tabulate_weights(std::span<const CouplingSample> samples, std::vector<Polymer> polymers,
                                    std::vector<std::vector<cplx>> X, EstimatorVariant variant,
                                    const CoarseLattice* symmetrize_on = nullptr) {
  WeightTable t;
  t.variant = variant;
  const std::size_t n = polymers.size(), S = samples.size();
  if (symmetrize_on) {
    auto cls = translation_classes(*symmetrize_on, polymers);
    std::size_t nc = cls.empty() ? 0 : *std::max_element(cls.begin(), cls.end()) + 1;
    std::vector<std::size_t> csize(nc, 0);
    for (auto k : cls) ++csize[k];
    for (auto& row : X) {
      std::vector<cplx> acc(nc, 0.0);
      for (std::size_t k = 0; k < n; ++k) acc[cls[k]] += row[k];
      for (std::size_t k = 0; k < n; ++k) row[k] = acc[cls[k]] / double(csize[cls[k]]);
    }
  }
  t.polymers = std::move(polymers);
  t.values.assign(n, 0.0);
  t.std_errors.assign(n, 0.0);
  t.sample_weights.resize(S);
  for (std::size_t s = 0; s < S; ++s)
    t.sample_weights[s] = variant == EstimatorVariant::Exact ? samples[s].weight : 1.0 / double(S);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t k = 0; k < n; ++k) t.values[k] += t.sample_weights[s] * X[s][k];
  if (variant == EstimatorVariant::MonteCarlo && S > 1)
    for (std::size_t k = 0; k < n; ++k) {
      double v = 0.0;
      for (std::size_t s = 0; s < S; ++s) v += std::norm(X[s][k] - t.values[k]);
      t.std_errors[k] = std::sqrt(v / double(S - 1) / double(S));
    }
  t.contributions = std::move(X);
  return t;
}

/// Estimate of w_z(gamma) for one polymer.
inline WeightEstimate estimate_weight(std::span<const CouplingSample> samples, const CoarseLattice& c,
                                      const Polymer& gamma, const ModelParams& p,
                                      EstimatorVariant variant = EstimatorVariant::MonteCarlo) {
  require(!samples.empty(), "weight estimation needs samples");
  std::vector<Polymer> one{gamma};
  auto X = weight_contributions(samples, one, [&](const CouplingSample& s, Site x) {
    return block_function_f(s.omega, c, x, p);
  });
  WeightTable t = tabulate_weights(samples, one, std::move(X), variant);
  return {gamma, p.z, t.values[0], t.std_errors[0], samples.size(), variant};
}

/// Standard error of a real or complex functional F(w) linearized at the
/// estimated weights: per sample u_s = sum_k grad_k X_s(k), SE from the
/// spread of u.
inline double propagated_error(const WeightTable& t, std::span<const cplx> gradient) {
  if (t.variant == EstimatorVariant::Exact) return 0.0;
  const std::size_t S = t.contributions.size();
  if (S < 2) return 0.0;
  std::vector<cplx> u(S, 0.0);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t k = 0; k < gradient.size(); ++k) u[s] += gradient[k] * t.contributions[s][k];
  cplx m = 0.0;
  for (auto x : u) m += x;
  m /= double(S);
  double v = 0.0;
  for (auto x : u) v += std::norm(x - m);
  return std::sqrt(v / double(S - 1) / double(S));
}

// Pressure and correlation pipelines.

struct PressureConfig {
  CouplingSetup coupling;
  int max_order = 6;
  int max_polymer_size = 12;
  std::size_t samples = 2000;
  std::uint64_t seed = 1;
  bool exact_weights = false;  // planted coupling only: enumerate the torus
  bool symmetrize = true;
  unsigned threads = 1;
};

struct PressurePoint {
  cplx z{};
  cplx estimate{};        // series / |T_N|
  cplx exact{};           // (1/|T_N|) log G_N(z) when the torus is enumerable
  bool has_exact = false;
  double envelope = 0.0;  // truncation bound, per site
  double std_error = 0.0; // propagated Monte Carlo error, per site
  bool kp_ok = false;     // criterion at weight upper bounds |w| + 3 SE
  double kp_worst_slack = 0.0;
  std::vector<cplx> partial_sums;  // per site, by order
};

/// Shared state of a pressure or correlation run: the torus, coarse
/// lattice, polymer list and coupling samples (common to all z).
struct ExpansionContext {
  TorusGeometry torus;
  CoarseLattice coarse;
  std::vector<Polymer> polymers;
  std::vector<CouplingSample> samples;
  EstimatorVariant variant = EstimatorVariant::MonteCarlo;

  ExpansionContext(const PressureConfig& cfg)
      : torus(cfg.coupling.dim, cfg.coupling.half_side), coarse(torus, cfg.coupling.coarse.L) {
    cfg.coupling.coarse.validate();
    require(cfg.max_order >= 1 && cfg.max_order <= kSeriesOrderCap, "max_order must be in [1, 8]");
    polymers = all_polymers(coarse, std::min(cfg.max_polymer_size, coarse.site_count()));
    if (cfg.exact_weights) {
      require(cfg.coupling.kind == CouplingKind::Planted, "exact weights need the planted coupling");
      samples = planted_exact(torus, coarse, cfg.coupling.params);
      variant = EstimatorVariant::Exact;
    } else {
      require(cfg.samples >= 2, "Monte Carlo weights need at least two samples");
      samples = draw_couplings(cfg.coupling, torus, coarse, cfg.samples, cfg.seed, cfg.threads);
    }
  }

  /// Estimated weights with block functions from `f_of(sample, x)`.
  template <class BlockFn>
  WeightTable weights(BlockFn&& f_of, bool symmetrize) const {
    auto X = weight_contributions(samples, polymers, f_of);
    return tabulate_weights(samples, polymers, std::move(X), variant, symmetrize ? &coarse : nullptr);
  }

  PolymerModel model(const WeightTable& t) const { return PolymerModel::geometric(coarse, polymers, t.values); }

  std::vector<int> sizes() const {
    std::vector<int> s;
    for (const auto& g : polymers) s.push_back(static_cast<int>(g.size()));
    return s;
  }
};

inline bool torus_enumerable(const TorusGeometry& g) { return g.edge_count() <= kDefaultEdgeCap; }

/// Series evaluation of F_N(z) = |T_N|^{-1} log G_N(z) at one z.
inline PressurePoint pressure_at(const ExpansionContext& ctx, const PressureConfig& cfg, cplx z) {
  ModelParams p = cfg.coupling.params.with_z(z);
  PressurePoint pt;
  pt.z = z;
  const double volume = ctx.torus.vertex_count();
  WeightTable t = ctx.weights([&](const CouplingSample& s, Site x) { return block_function_f(s.omega, ctx.coarse, x, p); },
                              cfg.symmetrize);
  PolymerModel m = ctx.model(t);
  SeriesResult sr = cluster_expansion_logZ(m, cfg.max_order);
  pt.estimate = sr.value() / volume;
  for (auto v : sr.partial_sums) pt.partial_sums.push_back(v / volume);
  pt.envelope = sr.envelope(cfg.max_order) / volume;
  pt.std_error = propagated_error(t, sr.gradient) / volume;
  std::vector<double> upper(m.size());
  for (std::size_t k = 0; k < m.size(); ++k) upper[k] = std::abs(t.values[k]) + 3.0 * t.std_errors[k];
  auto sizes = ctx.sizes();
  KPResult kp = kp_search_linear(m, upper, sizes);
  pt.kp_ok = kp.ok;
  pt.kp_worst_slack = kp.worst_slack;
  if (torus_enumerable(ctx.torus)) {
    if (z == cplx{}) {
      pt.exact = 0.0;
    } else {
      EdgeRegion whole = EdgeRegion::whole(ctx.torus);
      pt.exact = std::log(tilted_expectation(whole, p, BoundaryCondition::periodic())) / volume;
    }
    pt.has_exact = true;
  }
  return pt;
}

inline std::vector<PressurePoint> pressure_perturbation(const PressureConfig& cfg, std::span<const cplx> zs) {
  ExpansionContext ctx(cfg);
  std::vector<PressurePoint> out;
  for (cplx z : zs) out.push_back(pressure_at(ctx, cfg, z));
  return out;
}

/// Largest |z| in the grid such that the criterion passes at every grid
/// point of modulus up to it; 0 when the smallest fails.
inline double certified_radius(std::span<const PressurePoint> points) {
  std::vector<std::pair<double, bool>> v;
  for (const auto& p : points) v.emplace_back(std::abs(p.z), p.kp_ok);
  std::sort(v.begin(), v.end());
  double r = 0.0;
  for (auto [a, ok] : v) {
    if (!ok) break;
    r = a;
  }
  return r;
}

struct CorrelationPoint {
  cplx z{};
  cplx estimate{};  // exp(modified series - plain series)
  cplx exact{};
  bool has_exact = false;
  double envelope = 0.0;
  double std_error = 0.0;
};

/// phi_{beta+z}(g_A) from the plain and modified series.
inline CorrelationPoint correlation_at(const ExpansionContext& ctx, const PressureConfig& cfg, cplx z,
                                       std::vector<Edge> A) {
  std::sort(A.begin(), A.end());
  for (Edge e : A) require(e >= 0 && e < ctx.torus.edge_count(), "observable edge outside the torus");
  ModelParams p = cfg.coupling.params.with_z(z);
  CorrelationPoint pt;
  pt.z = z;
  WeightTable plain = ctx.weights([&](const CouplingSample& s, Site x) { return block_function_f(s.omega, ctx.coarse, x, p); },
                                  cfg.symmetrize);
  // The modified activities break translation invariance, so they are
  // never symmetrized.
  WeightTable mod = ctx.weights(
      [&](const CouplingSample& s, Site x) { return modified_block_function(s.omega, ctx.coarse, x, p, A); }, false);
  SeriesResult s0 = cluster_expansion_logZ(ctx.model(plain), cfg.max_order);
  SeriesResult s1 = cluster_expansion_logZ(ctx.model(mod), cfg.max_order);
  pt.estimate = std::exp(s1.value() - s0.value());
  const double mag = std::abs(pt.estimate);
  pt.envelope = mag * std::expm1(s0.envelope(cfg.max_order) + s1.envelope(cfg.max_order));
  if (ctx.variant == EstimatorVariant::MonteCarlo) {
    // Both series are functionals of one sample set: linearize jointly.
    const std::size_t S = ctx.samples.size();
    std::vector<cplx> u(S, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t k = 0; k < s1.gradient.size(); ++k) u[s] += s1.gradient[k] * mod.contributions[s][k];
      for (std::size_t k = 0; k < s0.gradient.size(); ++k) u[s] -= s0.gradient[k] * plain.contributions[s][k];
    }
    cplx mu = 0.0;
    for (auto x : u) mu += x;
    mu /= double(S);
    double v = 0.0;
    for (auto x : u) v += std::norm(x - mu);
    pt.std_error = mag * std::sqrt(v / double(S - 1) / double(S));
  }
  if (torus_enumerable(ctx.torus)) {
    EdgeRegion whole = EdgeRegion::whole(ctx.torus);
    pt.exact = observable_expectation(whole, A, p, BoundaryCondition::periodic());
    pt.has_exact = true;
  }
  return pt;
}

}  // namespace rcm
