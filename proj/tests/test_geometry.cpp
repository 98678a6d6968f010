#include "catch_amalgamated.hpp"

#include <set>

#include "rcm/geometry.hpp"

using namespace rcm;

TEST_CASE("torus sizes", "[geometry]") {
  CHECK(build_torus(1, 1).vertex_count() == 3);
  CHECK(build_torus(1, 1).edge_count() == 3);
  CHECK(build_torus(2, 1).vertex_count() == 9);
  CHECK(build_torus(2, 1).edge_count() == 18);
  CHECK(build_torus(2, 2).vertex_count() == 25);
  CHECK(build_torus(2, 2).edge_count() == 50);
  CHECK(build_torus(3, 0).vertex_count() == 1);
}

TEST_CASE("torus rejects bad shapes", "[geometry]") {
  CHECK_THROWS_AS(build_torus(0, 1), ConfigError);
  CHECK_THROWS_AS(build_torus(1, -1), ConfigError);
  CHECK_THROWS_AS(build_torus(40, 40), ConfigError);
}

TEST_CASE("vertex and edge indexing round trips", "[geometry]") {
  TorusGeometry g(3, 2);
  for (Vertex v = 0; v < g.vertex_count(); ++v) {
    CHECK(g.vertex(g.coords(v)) == v);
    CHECK(g.vertex_centered(g.centered(v)) == v);
    for (int k = 0; k < 3; ++k) {
      CHECK(g.centered(v)[k] >= -2);
      CHECK(g.centered(v)[k] <= 2);
    }
  }
  for (Edge e = 0; e < g.edge_count(); ++e) {
    auto [a, b] = g.endpoints(e);
    CHECK(g.edge(g.edge_base(e), g.edge_axis(e)) == e);
    CHECK(a == g.edge_base(e));
    CHECK(g.linf_distance(a, b) == 1);
  }
}

TEST_CASE("neighbours wrap modulo the side", "[geometry]") {
  TorusGeometry g(1, 2);
  Vertex last = g.vertex_centered(std::vector<int>{2});
  CHECK(g.shift(last, 0, 1) == g.vertex_centered(std::vector<int>{-2}));
  CHECK(g.offset(last, g.vertex_centered(std::vector<int>{-2}), 0) == 1);
}

TEST_CASE("balls and edge blocks", "[geometry]") {
  TorusGeometry g(2, 3);
  CHECK(g.ball(g.origin(), 1).size() == 9);
  CHECK(g.edge_block(g.origin(), 1).size() == 18);
  CHECK(g.ball(g.origin(), 3).size() == 49);
  CHECK_THROWS_AS(g.ball(g.origin(), 4), ConfigError);
  // Lambda_1 in d=2: edges touching the 3x3 box: 2*9 inside-based plus 6 entering from below/left.
  CHECK(g.edge_window(1).size() == 24);
}

TEST_CASE("coarse lattice sizes", "[geometry]") {
  TorusGeometry g14(1, 4), g24(2, 4), g11(1, 1);
  CHECK(coarse_lattice(g14, 1).site_count() == 3);
  CHECK(coarse_lattice(g24, 1).site_count() == 9);
  auto c = coarse_lattice(g11, 1);
  CHECK(c.site_count() == 1);
  CHECK(c.block_edges(0).size() == 3);
  TorusGeometry g13(1, 3);
  CHECK_THROWS_AS(coarse_lattice(g13, 1), ConfigError);
}

TEST_CASE("blocks partition vertices and edges", "[geometry]") {
  for (auto [d, N, L] : std::vector<std::tuple<int, int, int>>{{1, 4, 1}, {2, 4, 1}, {2, 7, 2}, {3, 1, 0}, {1, 7, 1}}) {
    TorusGeometry g(d, N);
    CoarseLattice c(g, L);
    std::vector<int> vhits(g.vertex_count(), 0), ehits(g.edge_count(), 0);
    for (Site x = 0; x < c.site_count(); ++x) {
      for (Vertex v : c.block_vertices(x)) {
        ++vhits[v];
        CHECK(c.site_of_vertex(v) == x);
      }
      for (Edge e : c.block_edges(x)) ++ehits[e];
    }
    for (int h : vhits) CHECK(h == 1);
    for (int h : ehits) CHECK(h == 1);
  }
}

TEST_CASE("coarse adjacency and star adjacency", "[geometry]") {
  TorusGeometry g(2, 7);
  CoarseLattice c(g, 1);  // 5x5 coarse torus
  REQUIRE(c.per_axis() == 5);
  for (Site a = 0; a < c.site_count(); ++a) {
    CHECK(c.neighbors(a).size() == 4);
    for (Site b = 0; b < c.site_count(); ++b) {
      CHECK(c.star_adjacent(a, b) == c.star_adjacent(b, a));
      if (c.adjacent(a, b)) CHECK(c.star_adjacent(a, b));
    }
  }
  Site o = c.site(std::vector<int>{2, 2});
  CHECK(c.star_adjacent(o, c.site(std::vector<int>{3, 3})));
  CHECK_FALSE(c.adjacent(o, c.site(std::vector<int>{3, 3})));
  CHECK_FALSE(c.star_adjacent(o, c.site(std::vector<int>{4, 2})));
  CHECK(c.graph_distance(o, c.site(std::vector<int>{4, 3})) == 3);
}

TEST_CASE("space-time adjacency", "[geometry]") {
  TorusGeometry g(1, 7);
  CoarseLattice c(g, 1);
  SpaceTimeLattice st(c, 4.0, 3);
  int x = st.index(2, 1);
  CHECK(st.adjacent(x, st.index(3, 1)));
  CHECK(st.adjacent(x, st.index(2, 0)));
  CHECK(st.adjacent(x, st.index(2, 2)));
  CHECK_FALSE(st.adjacent(x, st.index(3, 2)));
  CHECK(st.star_adjacent(x, st.index(3, 2)));
  CHECK(st.graph_distance(x, st.index(4, 0)) == 3);
  CHECK(st.neighbors(x).size() == 4);
  CHECK(st.neighbors(st.index(0, 0)).size() == 3);
  CHECK(st.depth_begin(x) == 4.0);
}

namespace {

// Naive oracle: every subset of size <= k containing x, filtered by connectivity.
std::set<std::vector<Site>> naive_polymers(const CoarseLattice& c, Site x, int k) {
  std::set<std::vector<Site>> out;
  const int n = c.site_count();
  for (std::uint32_t m = 1; m < (1u << n); ++m) {
    if (!((m >> x) & 1u) || std::popcount(m) > k) continue;
    std::vector<Site> s;
    for (int i = 0; i < n; ++i)
      if ((m >> i) & 1u) s.push_back(i);
    if (is_connected(Polymer(s), c)) out.insert(s);
  }
  return out;
}

}  // namespace

TEST_CASE("polymer enumeration matches the subset filter", "[geometry]") {
  TorusGeometry g1(1, 7), g2(2, 4), g3(2, 7);
  CoarseLattice line(g1, 1), sq3(g2, 1);
  CoarseLattice sq4(g3, 1);
  for (const CoarseLattice* c : {&line, &sq3}) {
    for (int k = 1; k <= std::min(6, c->site_count()); ++k) {
      auto got = enumerate_polymers(*c, 0, k);
      auto want = naive_polymers(*c, 0, k);
      REQUIRE(got.size() == want.size());
      for (const auto& p : got) CHECK(want.count(p.sites()) == 1);
    }
  }
  CHECK(enumerate_polymers(line, 0, 1).size() == 1);
  CHECK(enumerate_polymers(line, 0, 2).size() == 3);
  CHECK(enumerate_polymers(sq4, 0, 2).size() == 5);
}

TEST_CASE("polymer equality is set equality", "[geometry]") {
  CHECK(Polymer({3, 1, 2}) == Polymer({1, 2, 3, 2}));
  CHECK(std::hash<Polymer>{}(Polymer({3, 1})) == std::hash<Polymer>{}(Polymer({1, 3})));
}

TEST_CASE("growth constant bound", "[geometry]") {
  TorusGeometry g1(1, 7), g2(2, 7);
  double b1 = growth_constant_bound(CoarseLattice(g1, 1));
  double b2 = growth_constant_bound(CoarseLattice(g2, 1));
  CHECK(b1 >= 2.0);
  CHECK(b2 >= b1);
  CHECK(enumerate_polymers(CoarseLattice(g2, 1), 0, 1).size() <= b2);
}
