#pragma once

// Space-time coarse graining of the graphical construction: good/bad boxes,
// information clusters, decoupling surfaces and their locality, plus the
// empirical probes of the weak-mixing and finite-connection hypotheses.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rcm/cftp.hpp"
#include "rcm/connectivity.hpp"
#include "rcm/glauber.hpp"
#include "rcm/parallel.hpp"
#include "rcm/stats.hpp"

namespace rcm {

enum class GoodMode { Open, Close };

inline const char* to_string(GoodMode m) { return m == GoodMode::Open ? "open" : "close"; }

/// Scale parameters of the coarse graining. K = alpha * L; the cluster
/// diameter threshold is ceil(L * num / den), never below 1.
struct CoarseParams {
  int L = 1;
  double alpha = 4.0;
  int threshold_num = 1;
  int threshold_den = 100;

  double K() const { return alpha * L; }
  int check_radius() const { return (3 * L) / 2; }
  int window_radius() const { return 2 * L; }
  int diameter_threshold() const {
    require(threshold_num >= 0 && threshold_den > 0, "threshold ratio must be num >= 0, den > 0");
    long long t = (static_cast<long long>(L) * threshold_num + threshold_den - 1) / threshold_den;
    return static_cast<int>(std::max<long long>(1, t));
  }
  void validate() const {
    require(L >= 1, "coarse scale L must be >= 1 (K = alpha L must be positive)");
    require(alpha > 0, "alpha must be > 0");
    diameter_threshold();
  }
};

/// The schedule restricted to E_radius(center) x depth [depth_begin,
/// depth_begin + duration], with times shifted so the window ends at 0.
struct BoxWindow {
  const TorusGeometry* torus = nullptr;
  Vertex center = 0;
  int radius = 0;
  double depth_begin = 0.0;
  double duration = 0.0;
  std::vector<UpdateEvent> events;  // local times in [-duration, 0], sorted
};

inline void sort_events(std::vector<UpdateEvent>& ev) {
  std::sort(ev.begin(), ev.end(), [](const UpdateEvent& a, const UpdateEvent& b) {
    return a.time != b.time ? a.time < b.time : a.edge < b.edge;
  });
}

inline BoxWindow window_from_source(const ScheduleSource& src, const TorusGeometry& g, Vertex center,
                                    int radius, double depth_begin, double duration) {
  BoxWindow w{&g, center, radius, depth_begin, duration, {}};
  const double deepest = depth_begin + duration;
  for (Edge e : g.edge_block(center, radius))
    src.for_each_event(e, deepest, [&](const UpdateEvent& ev) {
      if (-ev.time >= depth_begin) w.events.push_back({ev.time + depth_begin, ev.edge, ev.uniform});
    });
  sort_events(w.events);
  return w;
}

inline BoxWindow window_from_schedule(const UpdateSchedule& sched, const TorusGeometry& g, Vertex center,
                                      int radius, double depth_begin, double duration) {
  require(sched.horizon() >= depth_begin + duration, "schedule does not reach the window depth");
  BoxWindow w{&g, center, radius, depth_begin, duration, {}};
  EdgeRegion block(g, g.edge_block(center, radius));
  for (const auto& ev : sched.events()) {
    double depth = -ev.time;
    if (depth < depth_begin || depth > depth_begin + duration) continue;
    if (block.contains(ev.edge)) w.events.push_back({ev.time + depth_begin, ev.edge, ev.uniform});
  }
  return w;
}

enum class Verdict { Good, Bad };
enum class Witness { None, Coalescence, Geometry };

inline const char* to_string(Witness w) {
  switch (w) {
    case Witness::None: return "none";
    case Witness::Coalescence: return "coalescence";
    case Witness::Geometry: return "geometry";
  }
  return "?";
}

struct BoxClassification {
  int site = 0;  // space-time index
  GoodMode mode = GoodMode::Close;
  Verdict verdict = Verdict::Bad;
  Witness witness = Witness::Coalescence;

  bool good() const { return verdict == Verdict::Good; }
};

/// Classifies the box whose window is `w`. Runs the dynamics on E_{2L}
/// from local time -3K/2 twice: from all-closed with free boundary and
/// from all-open with wired boundary. On the edge block E_{floor(3L/2)} the
/// two must agree from local time -K to 0 (checked at -K and after every
/// event there, which is exact since trajectories are piecewise constant),
/// and the common configuration must satisfy the cluster condition of
/// `mode` at those same instants.
inline BoxClassification classify_box(const BoxWindow& w, const CoarseParams& cp, GoodMode mode,
                                      const ModelParams& p, int site = 0) {
  cp.validate();
  const double K = cp.K();
  require(w.torus != nullptr, "window has no torus");
  require(w.radius >= cp.window_radius(), "window radius smaller than 2L");
  require(w.duration + 1e-12 >= 1.5 * K, "window shorter than 3K/2");

  const TorusGeometry& g = *w.torus;
  EdgeRegion volume(g, g.edge_block(w.center, cp.window_radius()));
  Box check(g, w.center, cp.check_radius());
  const int thr = cp.diameter_threshold();

  GlauberDynamics low(volume, p, BoundaryPath::constant(BoundaryCondition::free()));
  GlauberDynamics high(volume, p, BoundaryPath::constant(BoundaryCondition::wired()));
  low.set_configuration(EdgeConfiguration(volume.size(), false));
  high.set_configuration(EdgeConfiguration(volume.size(), true));

  // Agreement is required on the whole edge block E_{3L/2}, which contains
  // the core block E_L; the cluster condition looks at box-internal edges.
  std::vector<Edge> agree = g.edge_block(w.center, cp.check_radius());
  std::vector<char> in_check(g.edge_count(), 0);
  for (Edge e : agree) in_check[e] = 1;

  BoxClassification out{site, mode, Verdict::Good, Witness::None};
  auto inspect = [&]() -> bool {
    for (Edge e : agree) {
      int pos = volume.position(e);
      if (low.configuration()[pos] != high.configuration()[pos]) {
        out.verdict = Verdict::Bad;
        out.witness = Witness::Coalescence;
        return false;
      }
    }
    BoxClusterSummary s = analyze_box(
        check, [&](Edge e) { return low.configuration()[volume.position(e)]; }, thr);
    bool ok = mode == GoodMode::Open ? (s.spanning && s.clusters_at_least <= 1)
                                     : s.clusters_at_least == 0;
    if (!ok) {
      out.verdict = Verdict::Bad;
      out.witness = Witness::Geometry;
    }
    return ok;
  };

  const double start = -1.5 * K;
  const double check_from = -K;
  bool checked_start = false;
  for (const auto& ev : w.events) {
    if (ev.time < start) continue;
    if (ev.time > 0) break;
    if (volume.position(ev.edge) < 0) continue;
    if (!checked_start && ev.time > check_from) {
      checked_start = true;
      if (!inspect()) return out;
    }
    low.apply(ev);
    high.apply(ev);
    if (checked_start && in_check[ev.edge] && !inspect()) return out;
  }
  if (!checked_start && !inspect()) return out;
  return out;
}

/// Classification of every box of a space-time lattice for one mode.
struct ClassificationField {
  const SpaceTimeLattice* lattice = nullptr;
  GoodMode mode = GoodMode::Close;
  std::vector<BoxClassification> boxes;

  bool good(int x) const { return boxes[x].good(); }
  bool bad(int x) const { return !boxes[x].good(); }
  std::size_t bad_count() const {
    return static_cast<std::size_t>(std::count_if(boxes.begin(), boxes.end(),
                                                  [](const auto& b) { return !b.good(); }));
  }
};

/// Depth reached by the deepest window of the lattice.
inline double field_depth(const SpaceTimeLattice& st) {
  return st.layers() * st.block_time() + 0.5 * st.block_time();
}

template <class WindowOf>
ClassificationField classify_with(const SpaceTimeLattice& st, const CoarseParams& cp, GoodMode mode,
                                  const ModelParams& p, WindowOf&& window_of, unsigned threads) {
  require(std::abs(st.block_time() - cp.K()) < 1e-12, "lattice block time must equal alpha * L");
  require(st.base().scale() == cp.L, "lattice scale must equal L");
  ClassificationField f{&st, mode, {}};
  f.boxes = parallel_map<BoxClassification>(
      static_cast<std::size_t>(st.site_count()),
      [&](std::size_t i) {
        int x = static_cast<int>(i);
        BoxWindow w = window_of(st.base().center(st.spatial(x)), st.depth_begin(x));
        return classify_box(w, cp, mode, p, x);
      },
      threads);
  return f;
}

/// Classifies every box using per-edge streams of `key` (the torus schedule
/// is implicit and only the needed windows are generated).
inline ClassificationField classify_field(StreamKey key, const SpaceTimeLattice& st, const CoarseParams& cp,
                                          GoodMode mode, const ModelParams& p, unsigned threads = 1) {
  ScheduleSource src(key);
  const TorusGeometry& g = st.base().torus();
  return classify_with(st, cp, mode, p, [&](Vertex c, double depth) {
    return window_from_source(src, g, c, cp.window_radius(), depth, 1.5 * cp.K());
  }, threads);
}

/// Classifies every box from an explicit torus schedule.
inline ClassificationField classify_field(const UpdateSchedule& sched, const SpaceTimeLattice& st,
                                          const CoarseParams& cp, GoodMode mode, const ModelParams& p,
                                          unsigned threads = 1) {
  const TorusGeometry& g = st.base().torus();
  return classify_with(st, cp, mode, p, [&](Vertex c, double depth) {
    return window_from_schedule(sched, g, c, cp.window_radius(), depth, 1.5 * cp.K());
  }, threads);
}

/// A field with a prescribed bad set, for planted-oracle tests.
inline ClassificationField planted_field(const SpaceTimeLattice& st, GoodMode mode,
                                         const std::vector<char>& bad) {
  require(bad.size() == static_cast<std::size_t>(st.site_count()), "planted field size mismatch");
  ClassificationField f{&st, mode, {}};
  f.boxes.resize(bad.size());
  for (std::size_t i = 0; i < bad.size(); ++i)
    f.boxes[i] = {static_cast<int>(i), mode, bad[i] ? Verdict::Bad : Verdict::Good,
                  bad[i] ? Witness::Coalescence : Witness::None};
  return f;
}

/// I.i.d. Bernoulli(prob) bad sites.
inline ClassificationField bernoulli_field(const SpaceTimeLattice& st, GoodMode mode, double prob,
                                           std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<char> bad(st.site_count());
  for (auto& b : bad) b = rng.uniform() < prob;
  return planted_field(st, mode, bad);
}

/// Information cluster of a space-time anchor x. `bad_path` holds the bad
/// sites reachable from x by steps of graph distance at most 2 through bad
/// sites (x itself is included only when bad). `sites` is x together with
/// every site within distance 2 of `bad_path`; `spatial` is its projection.
struct InformationCluster {
  int anchor = 0;
  std::vector<int> bad_path;  // sorted
  std::vector<int> sites;     // sorted, contains anchor
  std::vector<Site> spatial;  // sorted

  bool trivial() const { return bad_path.empty(); }
  std::size_t spatial_size() const { return spatial.size(); }
};

/// Sites within graph distance r of x, by breadth-first search.
inline std::vector<int> spacetime_ball(const SpaceTimeLattice& st, int x, int r) {
  std::vector<int> out{x};
  std::vector<int> dist(st.site_count(), -1);
  dist[x] = 0;
  for (std::size_t h = 0; h < out.size(); ++h) {
    int v = out[h];
    if (dist[v] == r) continue;
    for (int w : st.neighbors(v))
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        out.push_back(w);
      }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Information clusters for the given anchors (all sites when empty).
inline std::vector<InformationCluster> extract_clusters(const ClassificationField& f,
                                                        std::vector<int> anchors = {}) {
  const SpaceTimeLattice& st = *f.lattice;
  const int n = st.site_count();
  if (anchors.empty())
    for (int x = 0; x < n; ++x) anchors.push_back(x);

  std::vector<std::vector<int>> ball2(n);
  auto ball = [&](int x) -> const std::vector<int>& {
    if (ball2[x].empty()) ball2[x] = spacetime_ball(st, x, 2);
    return ball2[x];
  };

  std::vector<InformationCluster> out;
  out.reserve(anchors.size());
  std::vector<char> seen(n, 0), in_set(n, 0);
  for (int x : anchors) {
    require(x >= 0 && x < n, "anchor outside the lattice");
    InformationCluster c;
    c.anchor = x;
    std::fill(seen.begin(), seen.end(), 0);
    std::vector<int> stack;
    if (f.bad(x)) {
      seen[x] = 1;
      stack.push_back(x);
    } else {
      for (int y : ball(x))
        if (f.bad(y) && !seen[y]) {
          seen[y] = 1;
          stack.push_back(y);
        }
    }
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      c.bad_path.push_back(v);
      for (int y : ball(v))
        if (f.bad(y) && !seen[y]) {
          seen[y] = 1;
          stack.push_back(y);
        }
    }
    std::sort(c.bad_path.begin(), c.bad_path.end());
    std::fill(in_set.begin(), in_set.end(), 0);
    in_set[x] = 1;
    for (int b : c.bad_path)
      for (int y : ball(b)) in_set[y] = 1;
    std::vector<char> sp(st.base().site_count(), 0);
    for (int y = 0; y < n; ++y)
      if (in_set[y]) {
        c.sites.push_back(y);
        sp[st.spatial(y)] = 1;
      }
    for (Site s = 0; s < static_cast<Site>(sp.size()); ++s)
      if (sp[s]) c.spatial.push_back(s);
    out.push_back(std::move(c));
  }
  return out;
}

/// Union of the spatial projections of several clusters.
inline std::vector<Site> joint_spatial(std::span<const InformationCluster> cs) {
  std::vector<Site> u;
  for (const auto& c : cs) u.insert(u.end(), c.spatial.begin(), c.spatial.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return u;
}

/// A candidate decoupling surface and the outcome of its verification.
/// `interior` is A(S), the union of the finite star-components of the
/// complement.
struct DecouplingSurface {
  std::vector<int> sites;     // S, sorted
  std::vector<int> interior;  // A(S), sorted
  bool verified = false;
  std::string failure;        // empty when verified

  std::vector<int> closure() const {
    std::vector<int> u = sites;
    u.insert(u.end(), interior.begin(), interior.end());
    std::sort(u.begin(), u.end());
    return u;
  }
};

/// Checks that S is nonempty and connected, that every site of S is good
/// in the field's mode, and that the complement splits into star-connected
/// components of which exactly one reaches the deepest layer (the finite
/// stand-in for the unbounded component), with S plus the others connected.
inline DecouplingSurface verify_decoupling_surface(std::vector<int> S, const ClassificationField& f) {
  const SpaceTimeLattice& st = *f.lattice;
  const int n = st.site_count();
  std::sort(S.begin(), S.end());
  S.erase(std::unique(S.begin(), S.end()), S.end());
  DecouplingSurface out;
  out.sites = S;
  auto fail = [&](std::string why) {
    out.failure = std::move(why);
    out.verified = false;
    return out;
  };
  if (S.empty()) return fail("surface is empty");
  for (int x : S)
    if (x < 0 || x >= n) return fail("surface site outside the lattice");
  if (!is_connected_set(S, [&](int a, int b) { return st.adjacent(a, b); }))
    return fail("surface is not connected");
  for (int x : S)
    if (f.bad(x)) return fail("surface contains a bad site");

  std::vector<char> in_s(n, 0);
  for (int x : S) in_s[x] = 1;
  std::vector<int> comp(n, -1);
  std::vector<std::vector<int>> comps;
  for (int s = 0; s < n; ++s) {
    if (in_s[s] || comp[s] >= 0) continue;
    int id = static_cast<int>(comps.size());
    comps.push_back({s});
    comp[s] = id;
    for (std::size_t h = 0; h < comps[id].size(); ++h) {
      int v = comps[id][h];
      for (int w = 0; w < n; ++w)
        if (!in_s[w] && comp[w] < 0 && st.star_adjacent(v, w)) {
          comp[w] = id;
          comps[id].push_back(w);
        }
    }
  }
  const int deepest = st.layers() - 1;
  int unbounded = -1, touching = 0;
  for (std::size_t i = 0; i < comps.size(); ++i)
    for (int v : comps[i])
      if (st.layer(v) == deepest) {
        ++touching;
        unbounded = static_cast<int>(i);
        break;
      }
  if (touching != 1)
    return fail(touching == 0 ? "no complement component reaches the deepest layer"
                              : "several complement components reach the deepest layer");
  for (std::size_t i = 0; i < comps.size(); ++i)
    if (static_cast<int>(i) != unbounded)
      out.interior.insert(out.interior.end(), comps[i].begin(), comps[i].end());
  std::sort(out.interior.begin(), out.interior.end());
  std::vector<int> cl = out.closure();
  if (!is_connected_set(cl, [&](int a, int b) { return st.adjacent(a, b); }))
    return fail("surface plus interior is not connected");
  out.verified = true;
  return out;
}

/// A product set of torus edges and a depth interval [depth_lo, depth_hi).
struct SpaceTimeBlock {
  std::vector<Edge> edges;  // sorted
  double depth_lo = 0.0;
  double depth_hi = 0.0;

  bool contains(Edge e, double depth) const {
    return depth >= depth_lo && depth < depth_hi && std::binary_search(edges.begin(), edges.end(), e);
  }
};

/// The regions attached to a verified surface: S' and its enlargement
/// S-bar' over S, the core S-ring over S plus A(S), and the enlargement
/// S-bar over S plus A(S).
struct SurfaceRegions {
  std::vector<SpaceTimeBlock> inner;        // E_{3L/2} x [t, t+K) over S
  std::vector<SpaceTimeBlock> inner_bar;    // E_{2L} x [t, t+3K/2) over S
  std::vector<SpaceTimeBlock> core;         // E_L x [t, t+K) over S and A(S)
  std::vector<SpaceTimeBlock> closure_bar;  // E_{2L} x [t, t+3K/2) over S and A(S)
};

inline bool covered(std::span<const SpaceTimeBlock> blocks, Edge e, double depth) {
  for (const auto& b : blocks)
    if (b.contains(e, depth)) return true;
  return false;
}

inline SurfaceRegions surface_regions(const DecouplingSurface& s, const SpaceTimeLattice& st,
                                      const CoarseParams& cp) {
  const TorusGeometry& g = st.base().torus();
  const double K = cp.K();
  auto block = [&](int x, int r, double len) {
    Vertex c = st.base().center(st.spatial(x));
    double t = st.depth_begin(x);
    return SpaceTimeBlock{g.edge_block(c, r), t, t + len};
  };
  SurfaceRegions R;
  for (int x : s.sites) {
    R.inner.push_back(block(x, cp.check_radius(), K));
    R.inner_bar.push_back(block(x, cp.window_radius(), 1.5 * K));
  }
  for (int x : s.closure()) {
    R.core.push_back(block(x, cp.L, K));
    R.closure_bar.push_back(block(x, cp.window_radius(), 1.5 * K));
  }
  return R;
}

/// States of chosen edges at chosen times under the dynamics on `volume`.
/// A query (t, e) returns the state after every event with time <= t.
struct StateQuery {
  double time;
  Edge edge;
};

inline std::vector<std::uint8_t> query_states(const UpdateSchedule& sched, const EdgeRegion& volume,
                                              const EdgeConfiguration& omega0, const BoundaryPath& path,
                                              const ModelParams& p, std::vector<StateQuery> queries) {
  std::vector<std::size_t> order(queries.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return queries[a].time < queries[b].time; });
  std::vector<std::uint8_t> out(queries.size(), 0);
  GlauberDynamics dyn(volume, p, path);
  dyn.advance_boundary(-sched.horizon());
  dyn.set_configuration(omega0);
  std::size_t qi = 0;
  auto answer_until = [&](double t, bool inclusive) {
    while (qi < order.size() && (inclusive ? queries[order[qi]].time <= t : queries[order[qi]].time < t)) {
      const auto& q = queries[order[qi]];
      int pos = volume.position(q.edge);
      require(pos >= 0, "queried edge outside the volume");
      out[order[qi]] = dyn.configuration()[pos];
      ++qi;
    }
  };
  for (const auto& ev : sched.events()) {
    answer_until(ev.time, false);
    if (dyn.position(ev.edge) >= 0) dyn.apply(ev);
  }
  answer_until(std::numeric_limits<double>::infinity(), true);
  return out;
}

/// A rule producing a perturbed copy of a torus schedule. It receives the
/// protected region S-bar and must leave events inside it untouched.
using Perturbation = std::function<UpdateSchedule(const UpdateSchedule&, std::span<const SpaceTimeBlock>)>;

inline Perturbation identity_perturbation() {
  return [](const UpdateSchedule& s, std::span<const SpaceTimeBlock>) { return s; };
}

/// Replaces every event outside the protected region with fresh Poisson
/// events and uniforms drawn from `key`.
inline Perturbation resample_outside(StreamKey key) {
  return [key](const UpdateSchedule& s, std::span<const SpaceTimeBlock> keep) {
    std::vector<UpdateEvent> ev;
    std::vector<Edge> edges;
    for (const auto& e : s.events()) {
      if (covered(keep, e.edge, -e.time)) ev.push_back(e);
      edges.push_back(e.edge);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    ScheduleSource fresh(key);
    for (Edge e : edges)
      fresh.for_each_event(e, s.horizon(), [&](const UpdateEvent& x) {
        if (!covered(keep, x.edge, -x.time)) ev.push_back(x);
      });
    return UpdateSchedule(s.horizon(), std::move(ev));
  };
}

/// Runs the periodic torus dynamics from all-open at depth sched.horizon()
/// on the original and on the perturbed schedule, and compares the states
/// on the core region: at the start of each core block and after every
/// event inside it. True iff nothing changed.
inline bool locality_check(const DecouplingSurface& s, const SpaceTimeLattice& st, const CoarseParams& cp,
                           const ModelParams& p, const UpdateSchedule& sched, const Perturbation& perturb) {
  require(s.verified, "locality check needs a verified surface");
  require(sched.horizon() >= field_depth(st), "schedule shallower than the space-time window");
  SurfaceRegions R = surface_regions(s, st, cp);
  UpdateSchedule other = perturb(sched, R.closure_bar);

  std::vector<StateQuery> queries;
  for (const auto& b : R.core)
    for (Edge e : b.edges) {
      queries.push_back({-b.depth_hi, e});
      for (const auto& ev : sched.events())
        if (ev.edge == e && -ev.time >= b.depth_lo && -ev.time < b.depth_hi) queries.push_back({ev.time, e});
    }
  const TorusGeometry& g = st.base().torus();
  EdgeRegion whole = EdgeRegion::whole(g);
  EdgeConfiguration ones(whole.size(), true);
  auto path = BoundaryPath::constant(BoundaryCondition::periodic());
  auto a = query_states(sched, whole, ones, path, p, queries);
  auto b = query_states(other, whole, ones, path, p, queries);
  return a == b;
}

// Estimates over many sampled fields.

struct DominationEstimate {
  int L = 0;
  std::size_t bad = 0;
  std::size_t boxes = 0;
  double p_hat = 0.0;
  Interval ci;
};

/// Empirical bad-site frequency over the given fields, with a 95% Wilson
/// interval.
inline DominationEstimate domination_estimate(std::span<const ClassificationField> fields, int L,
                                              std::size_t min_boxes = 1000) {
  DominationEstimate d;
  d.L = L;
  for (const auto& f : fields) {
    d.bad += f.bad_count();
    d.boxes += f.boxes.size();
  }
  require(d.boxes >= min_boxes, "domination estimate needs at least " + std::to_string(min_boxes) +
                                    " classified boxes");
  d.p_hat = double(d.bad) / double(d.boxes);
  d.ci = wilson_interval(d.bad, d.boxes);
  return d;
}

struct SurvivalPoint {
  int k = 0;
  double survival = 0.0;  // fraction of clusters with size >= k
  Interval ci;
  std::size_t count = 0;  // clusters with size >= k
};

/// Survival curve, log-linear fit log P(|C| >= k) = log c' - c k over the
/// observed sizes with at least `min_count` clusters at or above them, and
/// a bootstrap standard error for c (resampling replicas).
struct TailFit {
  std::vector<SurvivalPoint> curve;
  double rate = 0.0;       // c; +infinity when no cluster exceeds size 1
  double prefactor = 0.0;  // c'
  double rate_se = 0.0;
  double r_squared = 1.0;
  std::size_t clusters = 0;
  std::size_t fit_points = 0;
  bool degenerate = false;
  int L = 0;
  double p_hat = 0.0;  // domination estimate attached by the caller
};

namespace detail {

struct RateFit {
  double rate, prefactor, r2;
  std::size_t points;
};

inline std::optional<RateFit> fit_rate(const std::vector<int>& sizes, std::size_t min_count) {
  if (sizes.empty()) return std::nullopt;
  std::vector<int> s = sizes;
  std::sort(s.begin(), s.end());
  std::vector<int> support = s;
  support.erase(std::unique(support.begin(), support.end()), support.end());
  std::vector<double> xs, ys;
  const double n = double(s.size());
  for (int k : support) {
    auto at_least = static_cast<std::size_t>(s.end() - std::lower_bound(s.begin(), s.end(), k));
    if (at_least < min_count) break;
    xs.push_back(k);
    ys.push_back(std::log(double(at_least) / n));
  }
  if (xs.size() < 2) return std::nullopt;
  LineFit f = fit_line(xs, ys);
  return RateFit{-f.slope, std::exp(f.intercept), f.r_squared, xs.size()};
}

}  // namespace detail

/// `sizes_by_replica[r]` holds the cluster sizes of replica r.
inline TailFit tail_estimate(const std::vector<std::vector<int>>& sizes_by_replica, std::size_t min_count = 5,
                             std::size_t bootstrap = 200, std::uint64_t seed = 1) {
  std::vector<int> all;
  for (const auto& r : sizes_by_replica) all.insert(all.end(), r.begin(), r.end());
  TailFit t;
  t.clusters = all.size();
  require(!all.empty(), "tail estimate needs at least one cluster");
  std::sort(all.begin(), all.end());
  for (int k = 1; k <= all.back(); ++k) {
    auto c = static_cast<std::size_t>(all.end() - std::lower_bound(all.begin(), all.end(), k));
    t.curve.push_back({k, double(c) / double(all.size()), wilson_interval(c, all.size()), c});
  }
  auto fit = detail::fit_rate(all, min_count);
  if (!fit) {
    t.degenerate = true;
    t.rate = std::numeric_limits<double>::infinity();
    t.prefactor = 1.0;
    return t;
  }
  t.rate = fit->rate;
  t.prefactor = fit->prefactor;
  t.r_squared = fit->r2;
  t.fit_points = fit->points;
  t.rate_se = bootstrap_se(sizes_by_replica.size(), bootstrap, seed, [&](std::span<const std::size_t> idx) {
    std::vector<int> resample;
    for (auto i : idx) resample.insert(resample.end(), sizes_by_replica[i].begin(), sizes_by_replica[i].end());
    auto f = detail::fit_rate(resample, min_count);
    return f ? f->rate : std::numeric_limits<double>::quiet_NaN();
  });
  return t;
}

/// Fit of log P(|C_Delta| >= l) ~ a |Delta| - c l over samples of
/// (|Delta|, |C_Delta|) pairs, by least squares on the survival points of
/// every |Delta| group.
struct MultiAnchorFit {
  double a = 0.0;
  double c = 0.0;
  double intercept = 0.0;
  std::size_t points = 0;
};

inline MultiAnchorFit multi_anchor_fit(const std::vector<std::pair<int, int>>& delta_and_size,
                                       std::size_t min_count = 5) {
  std::map<int, std::vector<int>> groups;
  for (auto [d, s] : delta_and_size) groups[d].push_back(s);
  // Rows (1, |Delta|, l) -> log survival; solve the 3x3 normal equations.
  double A[3][3] = {}, b[3] = {};
  std::size_t pts = 0;
  for (auto& [d, sizes] : groups) {
    std::sort(sizes.begin(), sizes.end());
    std::vector<int> support = sizes;
    support.erase(std::unique(support.begin(), support.end()), support.end());
    for (int l : support) {
      auto c = static_cast<std::size_t>(sizes.end() - std::lower_bound(sizes.begin(), sizes.end(), l));
      if (c < min_count) break;
      double row[3] = {1.0, double(d), double(l)};
      double y = std::log(double(c) / double(sizes.size()));
      for (int i = 0; i < 3; ++i) {
        b[i] += row[i] * y;
        for (int j = 0; j < 3; ++j) A[i][j] += row[i] * row[j];
      }
      ++pts;
    }
  }
  MultiAnchorFit out;
  out.points = pts;
  // Gaussian elimination with partial pivoting.
  int perm[3] = {0, 1, 2};
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
    if (std::abs(A[piv][col]) < 1e-12) return out;
    std::swap(A[piv], A[col]);
    std::swap(b[piv], b[col]);
    std::swap(perm[piv], perm[col]);
    for (int r = col + 1; r < 3; ++r) {
      double m = A[r][col] / A[col][col];
      for (int j = col; j < 3; ++j) A[r][j] -= m * A[col][j];
      b[r] -= m * b[col];
    }
  }
  double x[3];
  for (int i = 2; i >= 0; --i) {
    double s = b[i];
    for (int j = i + 1; j < 3; ++j) s -= A[i][j] * x[j];
    x[i] = s / A[i][i];
  }
  out.intercept = x[0];
  out.a = x[1];
  out.c = -x[2];
  return out;
}

/// Configuration of one coarse-graining scan at a single scale L.
struct CoarseScanConfig {
  int dim = 1;
  int half_side = 52;
  CoarseParams coarse;
  int layers = 6;
  GoodMode mode = GoodMode::Close;
  ModelParams params;
  std::size_t replicas = 200;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool check_surfaces = false;  // verify C-tilde minus the bad path on every nontrivial cluster
};

struct CoarseScanResult {
  int L = 0;
  std::size_t boxes = 0;
  std::size_t bad = 0;
  std::vector<std::vector<int>> sizes;  // per replica, |C_x| for anchors on layer 0
  std::vector<std::pair<int, int>> multi_anchor;  // (|Delta|, |C_Delta|)
  std::size_t surfaces_checked = 0;
  std::size_t surfaces_verified = 0;
  std::size_t surfaces_skipped = 0;  // clusters reaching the deepest layer
  std::vector<std::string> surface_failures;

  double p_hat() const { return boxes ? double(bad) / double(boxes) : 0.0; }
};

inline CoarseScanResult coarse_scan(const CoarseScanConfig& cfg) {
  cfg.coarse.validate();
  TorusGeometry g(cfg.dim, cfg.half_side);
  CoarseLattice c(g, cfg.coarse.L);
  SpaceTimeLattice st(c, cfg.coarse.K(), cfg.layers);
  const int n0 = c.site_count();

  struct Rep {
    std::size_t bad = 0, boxes = 0, checked = 0, verified = 0, skipped = 0;
    std::vector<int> sizes;
    std::vector<std::pair<int, int>> multi;
    std::vector<std::string> failures;
  };
  auto reps = parallel_map<Rep>(cfg.replicas, [&](std::size_t r) {
    Rep out;
    ClassificationField f = classify_field(StreamKey{cfg.seed, r}, st, cfg.coarse, cfg.mode, cfg.params);
    out.bad = f.bad_count();
    out.boxes = f.boxes.size();
    std::vector<int> anchors(n0);
    std::iota(anchors.begin(), anchors.end(), 0);
    auto clusters = extract_clusters(f, anchors);
    for (const auto& cl : clusters) out.sizes.push_back(static_cast<int>(cl.spatial_size()));
    // Multi-anchor sets: runs of consecutive sites along the first axis.
    for (int len = 1; len <= std::min(3, n0); ++len) {
      std::vector<InformationCluster> part(clusters.begin(), clusters.begin() + len);
      out.multi.emplace_back(len, static_cast<int>(joint_spatial(part).size()));
    }
    if (cfg.check_surfaces)
      for (const auto& cl : clusters) {
        if (cl.trivial()) continue;
        bool deep = std::any_of(cl.sites.begin(), cl.sites.end(),
                                [&](int y) { return st.layer(y) == st.layers() - 1; });
        if (deep) {
          ++out.skipped;
          continue;
        }
        std::vector<int> S;
        std::set_difference(cl.sites.begin(), cl.sites.end(), cl.bad_path.begin(), cl.bad_path.end(),
                            std::back_inserter(S));
        ++out.checked;
        auto v = verify_decoupling_surface(S, f);
        if (v.verified) ++out.verified;
        else out.failures.push_back(v.failure);
      }
    return out;
  }, cfg.threads);

  CoarseScanResult res;
  res.L = cfg.coarse.L;
  for (auto& r : reps) {
    res.bad += r.bad;
    res.boxes += r.boxes;
    res.sizes.push_back(std::move(r.sizes));
    res.multi_anchor.insert(res.multi_anchor.end(), r.multi.begin(), r.multi.end());
    res.surfaces_checked += r.checked;
    res.surfaces_verified += r.verified;
    res.surfaces_skipped += r.skipped;
    for (auto& s : r.failures) res.surface_failures.push_back(std::move(s));
  }
  return res;
}

// Hypothesis probes.

struct H1Result {
  double tv = 0.0;
  bool exact = false;
  double std_error = 0.0;  // Monte Carlo path only
  std::size_t edges = 0;   // |Lambda_{aN}|
};

/// Distance between the free and wired measures on Lambda_{aN} restricted
/// to Lambda_N. Exact by enumeration when |Lambda_{aN}| <= exact_cap; above
/// that, the disagreement frequency of the monotone CFTP coupling (an upper
/// bound on the distance) over `trials` samples. Exact mode above
/// `hard_cap` edges is refused.
inline H1Result h1_probe(int dim, int N, double a, const ModelParams& p, std::size_t trials,
                         std::uint64_t seed, int exact_cap = 20, bool force_exact = false) {
  require(N >= 0 && a >= 1.0, "h1 probe needs N >= 0 and a >= 1");
  int outer = static_cast<int>(std::lround(a * N));
  TorusGeometry g(dim, outer + 2);
  EdgeRegion big(g, g.edge_window(outer));
  std::vector<Edge> inner = g.edge_window(N);
  H1Result r;
  r.edges = static_cast<std::size_t>(big.size());
  if (big.size() <= exact_cap || force_exact) {
    if (big.size() > exact_cap) throw CapExceeded("h1 exact mode: window exceeds the enumeration cap");
    auto pos = window_positions(big, inner);
    auto lo = rc_marginal(big, pos, p, BoundaryCondition::free(), exact_cap);
    auto hi = rc_marginal(big, pos, p, BoundaryCondition::wired(), exact_cap);
    r.tv = total_variation(lo, hi);
    r.exact = true;
    return r;
  }
  require(trials >= 1, "h1 Monte Carlo needs trials >= 1");
  std::size_t differ = 0;
  auto pos = window_positions(big, inner);
  for (std::size_t t = 0; t < trials; ++t) {
    ScheduleSource src({seed, t});
    double h = std::max(1, big.size());
    for (;; h *= 2) {
      if (h > (1 << 16)) throw NotCoalesced("h1 probe: sandwich did not coalesce");
      UpdateSchedule sched = src.schedule(big.edges, h);
      Sandwich lo = sandwich_evolve(sched, big, p, h, BoundaryCondition::free(), BoundaryCondition::free());
      Sandwich hi = sandwich_evolve(sched, big, p, h, BoundaryCondition::wired(), BoundaryCondition::wired());
      bool ok = true;
      for (int i : pos) ok = ok && lo.low[i] == lo.high[i] && hi.low[i] == hi.high[i];
      if (!ok) continue;
      for (int i : pos)
        if (lo.low[i] != hi.low[i]) {
          ++differ;
          break;
        }
      break;
    }
  }
  auto e = binomial_estimate(differ, trials);
  r.tv = e.value;
  r.std_error = e.std_error;
  return r;
}

/// Frequency of the finite-connection event in B_N under the wired measure
/// on E_{aN}. Close mode counts A_N, some cluster of diameter >=
/// max(1, ceil(N/100)). Open mode counts A'_N, a spanning cluster and no
/// second cluster of that diameter. Samples are exact (CFTP).
inline ProbabilityEstimate h2_probe(int dim, int N, double a, const ModelParams& p, GoodMode mode,
                                    std::size_t trials, std::uint64_t seed) {
  require(N >= 1 && a >= 1.0, "h2 probe needs N >= 1 and a >= 1");
  int outer = static_cast<int>(std::lround(a * N));
  TorusGeometry g(dim, outer + 1);
  EdgeRegion volume(g, g.edge_block(g.origin(), outer));
  Box box(g, g.origin(), N);
  CoarseParams thr{N, 1.0, 1, 100};
  const int t = thr.diameter_threshold();
  std::size_t hits = 0;
  for (std::size_t r = 0; r < trials; ++r) {
    auto res = cftp_sample({seed, r}, volume, box.edges, p, BoundaryCondition::wired());
    if (!res.coalesced) throw NotCoalesced("h2 probe: CFTP did not coalesce");
    std::vector<char> open(g.edge_count(), 0);
    for (std::size_t i = 0; i < box.edges.size(); ++i) open[box.edges[i]] = res.sample[i];
    BoxClusterSummary s = analyze_box(box, [&](Edge e) { return open[e] != 0; }, t);
    bool event = mode == GoodMode::Close ? s.clusters_at_least > 0
                                         : (s.spanning && s.clusters_at_least <= 1);
    if (event) ++hits;
  }
  return binomial_estimate(hits, trials);
}

}  // namespace rcm
