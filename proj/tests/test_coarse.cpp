#include "catch_amalgamated.hpp"

#include <cmath>
#include <set>

#include "rcm/coarse.hpp"

using namespace rcm;

namespace {

ModelParams params(double q, double beta) {
  ModelParams p;
  p.q = q;
  p.beta = beta;
  return p;
}

// A window in which every edge of E_{2L} rings once at local time -1.4K
// with the given uniform; nothing else happens.
BoxWindow scripted_window(const TorusGeometry& g, Vertex c, const CoarseParams& cp, double u) {
  BoxWindow w{&g, c, cp.window_radius(), 0.0, 1.5 * cp.K(), {}};
  for (Edge e : g.edge_block(c, cp.window_radius())) w.events.push_back({-1.4 * cp.K(), e, u});
  sort_events(w.events);
  return w;
}

// Oracle for information clusters using the all-pairs distance of the
// space-time lattice rather than breadth-first balls.
InformationCluster naive_cluster(const ClassificationField& f, int x) {
  const SpaceTimeLattice& st = *f.lattice;
  const int n = st.site_count();
  std::set<int> path;
  std::vector<int> frontier;
  for (int y = 0; y < n; ++y)
    if (f.bad(y) && (y == x || (!f.bad(x) && st.graph_distance(x, y) <= 2))) {
      path.insert(y);
      frontier.push_back(y);
    }
  while (!frontier.empty()) {
    int v = frontier.back();
    frontier.pop_back();
    for (int y = 0; y < n; ++y)
      if (f.bad(y) && !path.count(y) && st.graph_distance(v, y) <= 2) {
        path.insert(y);
        frontier.push_back(y);
      }
  }
  std::set<int> sites{x};
  for (int b : path)
    for (int y = 0; y < n; ++y)
      if (st.graph_distance(b, y) <= 2) sites.insert(y);
  std::set<Site> spatial;
  for (int y : sites) spatial.insert(st.spatial(y));
  InformationCluster c;
  c.anchor = x;
  c.bad_path.assign(path.begin(), path.end());
  c.sites.assign(sites.begin(), sites.end());
  c.spatial.assign(spatial.begin(), spatial.end());
  return c;
}

std::vector<int> star_ring(const SpaceTimeLattice& st, int x) {
  std::vector<int> S;
  for (int y = 0; y < st.site_count(); ++y)
    if (y != x && st.star_adjacent(x, y)) S.push_back(y);
  return S;
}

}  // namespace

TEST_CASE("coarse scale parameters", "[coarse]") {
  CoarseParams cp;
  CHECK(cp.diameter_threshold() == 1);
  CHECK(cp.check_radius() == 1);
  CHECK(cp.window_radius() == 2);
  cp.L = 250;
  CHECK(cp.diameter_threshold() == 3);
  cp.L = 4;
  cp.alpha = 2.5;
  CHECK(cp.K() == 10.0);
  CHECK(cp.check_radius() == 6);
  cp.L = 0;
  CHECK_THROWS_AS(cp.validate(), ConfigError);
}

TEST_CASE("box with no events cannot coalesce", "[coarse]") {
  TorusGeometry g(1, 10);
  CoarseParams cp;
  BoxWindow w{&g, g.origin(), 2, 0.0, 1.5 * cp.K(), {}};
  auto b = classify_box(w, cp, GoodMode::Close, params(2, 0.5));
  CHECK_FALSE(b.good());
  CHECK(b.witness == Witness::Coalescence);
}

TEST_CASE("scripted windows exercise both modes", "[coarse]") {
  for (int d : {1, 2}) {
    TorusGeometry g(d, 4);
    CoarseParams cp;
    ModelParams p = params(2, 1.0);
    auto closing = scripted_window(g, g.origin(), cp, 0.999999);
    auto opening = scripted_window(g, g.origin(), cp, 0.0);
    CHECK(classify_box(closing, cp, GoodMode::Close, p).good());
    auto c_open = classify_box(closing, cp, GoodMode::Open, p);
    CHECK_FALSE(c_open.good());
    CHECK(c_open.witness == Witness::Geometry);
    CHECK(classify_box(opening, cp, GoodMode::Open, p).good());
    auto o_close = classify_box(opening, cp, GoodMode::Close, p);
    CHECK_FALSE(o_close.good());
    CHECK(o_close.witness == Witness::Geometry);
  }
}

TEST_CASE("late updates do not count toward coalescence", "[coarse]") {
  TorusGeometry g(1, 6);
  CoarseParams cp;
  auto w = scripted_window(g, g.origin(), cp, 0.999999);
  for (auto& e : w.events) e.time = -0.5 * cp.K();  // after the check starts
  auto b = classify_box(w, cp, GoodMode::Close, params(2, 1.0));
  CHECK_FALSE(b.good());
  CHECK(b.witness == Witness::Coalescence);
}

TEST_CASE("window extraction agrees between streams and schedules", "[coarse]") {
  TorusGeometry g(1, 10);  // 7 coarse sites
  CoarseLattice c(g, 1);
  CoarseParams cp;
  SpaceTimeLattice st(c, cp.K(), 3);
  ModelParams p = params(2, 0.2);
  EdgeRegion whole = EdgeRegion::whole(g);
  auto sched = ScheduleSource({4, 4}).schedule(whole.edges, field_depth(st));
  auto a = classify_field(StreamKey{4, 4}, st, cp, GoodMode::Close, p);
  auto b = classify_field(sched, st, cp, GoodMode::Close, p);
  REQUIRE(a.boxes.size() == b.boxes.size());
  for (std::size_t i = 0; i < a.boxes.size(); ++i) {
    CHECK(a.boxes[i].verdict == b.boxes[i].verdict);
    CHECK(a.boxes[i].witness == b.boxes[i].witness);
  }
  auto threaded = classify_field(StreamKey{4, 4}, st, cp, GoodMode::Close, p, 3);
  for (std::size_t i = 0; i < a.boxes.size(); ++i) CHECK(a.boxes[i].verdict == threaded.boxes[i].verdict);
}

TEST_CASE("classification rejects mismatched lattices", "[coarse]") {
  TorusGeometry g(1, 10);
  CoarseLattice c(g, 1);
  SpaceTimeLattice st(c, 3.0, 2);
  CoarseParams cp;  // K = 4
  CHECK_THROWS_AS(classify_field(StreamKey{1, 1}, st, cp, GoodMode::Close, params(2, 0.1)), ConfigError);
}

TEST_CASE("information clusters on planted fields", "[coarse]") {
  TorusGeometry g(1, 22);  // 15 coarse sites
  CoarseLattice c(g, 1);
  SpaceTimeLattice st(c, 4.0, 5);
  std::vector<char> none(st.site_count(), 0);
  for (const auto& cl : extract_clusters(planted_field(st, GoodMode::Close, none))) {
    CHECK(cl.trivial());
    CHECK(cl.sites == std::vector<int>{cl.anchor});
    CHECK(cl.spatial_size() == 1);
  }

  std::vector<char> one = none;
  int b = st.index(7, 2);
  one[b] = 1;
  auto f = planted_field(st, GoodMode::Close, one);
  auto at_b = extract_clusters(f, {b})[0];
  CHECK(at_b.bad_path == std::vector<int>{b});
  CHECK(at_b.sites.size() == 13);  // diamond of radius 2
  CHECK(at_b.spatial_size() == 5);
  CHECK(extract_clusters(f, {st.index(9, 2)})[0].bad_path == std::vector<int>{b});
  CHECK(extract_clusters(f, {st.index(8, 1)})[0].bad_path == std::vector<int>{b});
  CHECK(extract_clusters(f, {st.index(10, 2)})[0].trivial());

  // Bad sites two apart chain together; three apart do not.
  std::vector<char> pair = none;
  pair[st.index(3, 0)] = pair[st.index(5, 0)] = pair[st.index(8, 0)] = 1;
  auto fp = planted_field(st, GoodMode::Close, pair);
  auto cl = extract_clusters(fp, {st.index(3, 0)})[0];
  CHECK(cl.bad_path == std::vector<int>{st.index(3, 0), st.index(5, 0)});
}

TEST_CASE("information clusters match the distance-matrix oracle", "[coarse][property]") {
  TorusGeometry g1(1, 22), g2(2, 7);
  CoarseLattice c1(g1, 1), c2(g2, 1);
  SpaceTimeLattice s1(c1, 4.0, 5), s2(c2, 4.0, 3);
  for (const SpaceTimeLattice* st : {&s1, &s2})
    for (double prob : {0.05, 0.15, 0.3})
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto f = bernoulli_field(*st, GoodMode::Close, prob, seed);
        auto got = extract_clusters(f);
        for (int x = 0; x < st->site_count(); ++x) {
          auto want = naive_cluster(f, x);
          REQUIRE(got[x].bad_path == want.bad_path);
          REQUIRE(got[x].sites == want.sites);
          REQUIRE(got[x].spatial == want.spatial);
        }
      }
}

TEST_CASE("decoupling surface verification", "[coarse]") {
  TorusGeometry g(1, 10);  // 7 coarse sites
  CoarseLattice c(g, 1);
  SpaceTimeLattice st(c, 4.0, 4);
  std::vector<char> none(st.site_count(), 0);
  auto f = planted_field(st, GoodMode::Close, none);

  int x = st.index(3, 1);
  auto ring = verify_decoupling_surface(star_ring(st, x), f);
  CHECK(ring.verified);
  CHECK(ring.interior == std::vector<int>{x});
  CHECK(ring.closure().size() == 9);

  // A slab at layer 2 encloses everything above it.
  std::vector<int> slab;
  for (Site s = 0; s < c.site_count(); ++s) slab.push_back(st.index(s, 2));
  auto sv = verify_decoupling_surface(slab, f);
  CHECK(sv.verified);
  CHECK(sv.interior.size() == static_cast<std::size_t>(2 * c.site_count()));

  CHECK(verify_decoupling_surface({}, f).failure == "surface is empty");
  CHECK(verify_decoupling_surface({st.index(0, 0), st.index(3, 0)}, f).failure == "surface is not connected");

  std::vector<char> bad_one = none;
  bad_one[st.index(2, 1)] = 1;
  auto fb = planted_field(st, GoodMode::Close, bad_one);
  CHECK(verify_decoupling_surface(star_ring(st, x), fb).failure == "surface contains a bad site");

  std::vector<int> deep;
  for (Site s = 0; s < c.site_count(); ++s) deep.push_back(st.index(s, 3));
  CHECK_FALSE(verify_decoupling_surface(deep, f).verified);

  // A ring that is not closed leaves x attached to the outer component.
  std::vector<int> open_ring = star_ring(st, x);
  open_ring.erase(std::find(open_ring.begin(), open_ring.end(), st.index(4, 1)));
  auto ov = verify_decoupling_surface(open_ring, f);
  if (ov.verified) CHECK(ov.interior.empty());
}

TEST_CASE("surface regions nest as expected", "[coarse]") {
  TorusGeometry g(1, 10);
  CoarseLattice c(g, 1);
  CoarseParams cp;
  SpaceTimeLattice st(c, cp.K(), 4);
  std::vector<char> none(st.site_count(), 0);
  auto f = planted_field(st, GoodMode::Close, none);
  auto s = verify_decoupling_surface(star_ring(st, st.index(3, 1)), f);
  REQUIRE(s.verified);
  auto R = surface_regions(s, st, cp);
  CHECK(R.inner.size() == s.sites.size());
  CHECK(R.core.size() == s.sites.size() + 1);
  for (const auto& b : R.core)
    for (Edge e : b.edges) CHECK(covered(R.closure_bar, e, b.depth_lo));
}

TEST_CASE("locality: outside resampling never changes the core", "[coarse][property]") {
  CoarseParams cp;
  cp.alpha = 5.0;
  ModelParams p = params(2, 1e-4);
  for (int dim : {1, 2}) {
    TorusGeometry g(dim, dim == 1 ? 10 : 7);
    CoarseLattice c(g, 1);
    if (dim == 2) cp.alpha = 10.0;
    SpaceTimeLattice st(c, cp.K(), 4);
    EdgeRegion whole = EdgeRegion::whole(g);
    int found = 0, changed = 0;
    for (std::uint64_t r = 0; r < 40 && found < 5; ++r) {
      auto sched = ScheduleSource({31, r}).schedule(whole.edges, field_depth(st));
      auto f = classify_field(sched, st, cp, GoodMode::Close, p);
      for (int x = 0; x < st.site_count() && found < 5; ++x) {
        auto s = verify_decoupling_surface(star_ring(st, x), f);
        if (!s.verified) continue;
        ++found;
        for (std::uint64_t k = 0; k < 5; ++k)
          if (!locality_check(s, st, cp, p, sched, resample_outside({r + 500, k}))) ++changed;
        CHECK(locality_check(s, st, cp, p, sched, identity_perturbation()));
      }
    }
    CHECK(found == 5);
    CHECK(changed == 0);
  }
}

TEST_CASE("locality check detects perturbations inside the protected region", "[coarse]") {
  CoarseParams cp;
  cp.alpha = 5.0;
  ModelParams p = params(2, 0.5);
  TorusGeometry g(1, 10);
  CoarseLattice c(g, 1);
  SpaceTimeLattice st(c, cp.K(), 4);
  EdgeRegion whole = EdgeRegion::whole(g);
  std::vector<char> none(st.site_count(), 0);
  // The surface is verified against a planted field, so nothing shields the core.
  auto f = planted_field(st, GoodMode::Close, none);
  auto s = verify_decoupling_surface(star_ring(st, st.index(3, 1)), f);
  REQUIRE(s.verified);
  Perturbation everything = [&](const UpdateSchedule& sched, std::span<const SpaceTimeBlock>) {
    return ScheduleSource({999, 1}).schedule(whole.edges, sched.horizon());
  };
  int changed = 0;
  for (std::uint64_t r = 0; r < 10; ++r) {
    auto sched = ScheduleSource({32, r}).schedule(whole.edges, field_depth(st));
    if (!locality_check(s, st, cp, p, sched, everything)) ++changed;
  }
  CHECK(changed > 0);
}

TEST_CASE("domination estimate", "[coarse]") {
  TorusGeometry g(1, 22);
  CoarseLattice c(g, 1);
  SpaceTimeLattice st(c, 4.0, 10);
  std::vector<ClassificationField> fields;
  for (std::uint64_t s = 0; s < 20; ++s) fields.push_back(bernoulli_field(st, GoodMode::Close, 0.2, s));
  auto d = domination_estimate(fields, 1);
  CHECK(d.boxes == 3000);
  CHECK(d.ci.lo <= 0.2);
  CHECK(d.ci.hi >= 0.2);
  CHECK_THROWS_AS(domination_estimate(std::span(fields).first(1), 1), ConfigError);
}

TEST_CASE("tail fit recovers a geometric rate", "[coarse][statistics]") {
  SplitMix64 rng(2);
  const double r = 0.6;
  std::vector<std::vector<int>> reps(200);
  for (auto& rep : reps)
    for (int i = 0; i < 50; ++i) {
      int k = 1;
      while (rng.uniform() < r) ++k;
      rep.push_back(k);
    }
  auto fit = tail_estimate(reps, 5, 100, 3);
  CHECK_FALSE(fit.degenerate);
  CHECK(fit.rate == Catch::Approx(-std::log(r)).margin(4 * fit.rate_se + 0.02));
  CHECK(fit.rate_se > 0);
  CHECK(fit.r_squared > 0.95);
  CHECK(fit.curve.front().survival == 1.0);
}

TEST_CASE("tail fit with only trivial clusters is degenerate", "[coarse]") {
  std::vector<std::vector<int>> reps(10, std::vector<int>(5, 1));
  auto fit = tail_estimate(reps);
  CHECK(fit.degenerate);
  CHECK(std::isinf(fit.rate));
}

TEST_CASE("multi-anchor fit recovers a and c", "[coarse][statistics]") {
  SplitMix64 rng(8);
  const double r = 0.5;
  std::vector<std::pair<int, int>> data;
  for (int d = 1; d <= 3; ++d)
    for (int i = 0; i < 20000; ++i) {
      int k = d;
      while (rng.uniform() < r) ++k;
      data.emplace_back(d, k);
    }
  auto m = multi_anchor_fit(data);
  CHECK(m.c == Catch::Approx(std::log(2.0)).margin(0.05));
  CHECK(m.a == Catch::Approx(std::log(2.0)).margin(0.1));  // tail truncation biases a slightly
}

TEST_CASE("hypothesis probes at tiny beta", "[coarse]") {
  ModelParams p = params(2, 1e-4);
  auto exact = h1_probe(1, 2, 2.0, p, 0, 1);
  CHECK(exact.exact);
  CHECK(exact.tv < 1e-3);
  auto mc = h1_probe(1, 4, 3.0, p, 200, 1, 10);
  CHECK_FALSE(mc.exact);
  CHECK(mc.tv <= 0.05);
  CHECK(h1_probe(1, 2, 2.0, params(2, 0.0), 0, 1).tv == Catch::Approx(0.0).margin(1e-15));
  CHECK(h2_probe(1, 2, 2.0, p, GoodMode::Close, 200, 1).value < 0.05);
  CHECK(h2_probe(1, 2, 2.0, params(2, 0.0), GoodMode::Open, 50, 1).value == 0.0);
}

TEST_CASE("h1 exact distance shrinks as the outer box grows", "[coarse]") {
  ModelParams p = params(2, 0.6);
  double prev = 1.0;
  for (double a : {1.0, 2.0, 3.0, 4.0}) {
    auto r = h1_probe(1, 1, a, p, 0, 1, 24);
    REQUIRE(r.exact);
    CHECK(r.tv <= prev + 1e-12);
    prev = r.tv;
  }
}

TEST_CASE("coarse scan bookkeeping", "[coarse]") {
  CoarseScanConfig cfg;
  cfg.half_side = 10;
  cfg.layers = 3;
  cfg.replicas = 6;
  cfg.params = params(2, 1e-4);
  cfg.check_surfaces = true;
  auto r = coarse_scan(cfg);
  CHECK(r.boxes == 6u * 7u * 3u);
  CHECK(r.sizes.size() == 6);
  for (const auto& s : r.sizes) CHECK(s.size() == 7);
  CHECK(r.multi_anchor.size() == 18);
  CHECK(r.surfaces_checked == r.surfaces_verified + r.surface_failures.size());
}
