#include "catch_amalgamated.hpp"

#include <cmath>
#include <numbers>

#include "rcm/rc_core.hpp"
#include "rcm/rng.hpp"

using namespace rcm;
using Catch::Approx;

namespace {

const double kLn2 = std::numbers::ln2;

ModelParams params(double q, double beta) {
  ModelParams p;
  p.q = q;
  p.beta = beta;
  return p;
}

EdgeRegion single_edge(const TorusGeometry& g) { return EdgeRegion(g, {g.edge(g.origin(), 0)}); }

}  // namespace

TEST_CASE("cluster counts of a single edge", "[rc-core]") {
  TorusGeometry g(2, 2);
  EdgeRegion r = single_edge(g);
  EdgeConfiguration closed(1, false), open(1, true);
  CHECK(cluster_count(r, closed, BoundaryCondition::free()).kappa == 2);
  CHECK(cluster_count(r, open, BoundaryCondition::free()).kappa == 1);
  CHECK(cluster_count(r, closed, BoundaryCondition::wired()).kappa == 1);
}

TEST_CASE("random-cluster weights", "[rc-core]") {
  TorusGeometry g(2, 2);
  EdgeRegion r = single_edge(g);
  CHECK(rc_weight(r, EdgeConfiguration(1, true), params(2, kLn2), BoundaryCondition::free()).real() ==
        Approx(2.0).epsilon(1e-14));
  CHECK(rc_weight(r, EdgeConfiguration(1, false), params(2, kLn2), BoundaryCondition::free()).real() ==
        Approx(4.0).epsilon(1e-14));
  CHECK(rc_weight(r, EdgeConfiguration(1, true), params(2, 0.0), BoundaryCondition::free()) == cplx{0.0});
}

TEST_CASE("partition functions by enumeration", "[rc-core]") {
  TorusGeometry g2(2, 2), c3(1, 1);
  CHECK(rc_partition(single_edge(g2), params(2, kLn2), BoundaryCondition::free()).real() ==
        Approx(6.0).epsilon(1e-14));
  CHECK(rc_partition(EdgeRegion::whole(c3), params(2, kLn2), BoundaryCondition::periodic()).real() ==
        Approx(28.0).epsilon(1e-14));
  // beta = 0: only the empty configuration survives, Z = q^{|V_F|}.
  EdgeRegion block(g2, g2.edge_block(g2.origin(), 1));
  RegionGraph rg = build_region_graph(block, BoundaryCondition::free());
  CHECK(rc_partition(block, params(3, 0.0), BoundaryCondition::free()).real() ==
        Approx(std::pow(3.0, rg.vertex_count())).epsilon(1e-14));
}

TEST_CASE("enumeration cap", "[rc-core]") {
  TorusGeometry g(2, 2);
  CHECK_THROWS_AS(rc_partition(EdgeRegion::whole(g), params(2, 1.0), BoundaryCondition::periodic()),
                  CapExceeded);
}

TEST_CASE("Gray-code counts agree with direct recount", "[rc-core]") {
  TorusGeometry g(2, 1);
  SplitMix64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Edge> e;
    for (Edge x = 0; x < g.edge_count(); ++x)
      if (rng.uniform() < 0.5) e.push_back(x);
    if (e.empty() || e.size() > 12) continue;
    EdgeRegion r(g, e);
    for (auto bc : {BoundaryCondition::free(), BoundaryCondition::wired()}) {
      RegionGraph rg = build_region_graph(r, bc);
      for_each_configuration(rg, [&](std::uint64_t mask, int kappa) {
        REQUIRE(kappa == cluster_count_mask(rg, mask));
        REQUIRE(kappa == cluster_count(r, EdgeConfiguration::from_mask(r.size(), mask), bc).kappa);
      });
    }
  }
}

TEST_CASE("wired never has more clusters than free", "[rc-core]") {
  TorusGeometry g(2, 2);
  EdgeRegion r(g, g.edge_block(g.origin(), 1));
  RegionGraph f = build_region_graph(r, BoundaryCondition::free());
  RegionGraph w = build_region_graph(r, BoundaryCondition::wired());
  SplitMix64 rng(9);
  for (int i = 0; i < 500; ++i) {
    std::uint64_t m = rng() & ((std::uint64_t{1} << r.size()) - 1);
    CHECK(cluster_count_mask(w, m) <= cluster_count_mask(f, m));
  }
}

TEST_CASE("periodic boundary needs the whole torus", "[rc-core]") {
  TorusGeometry g(1, 2);
  EdgeRegion r(g, {0, 1});
  CHECK_THROWS_AS(build_region_graph(r, BoundaryCondition::periodic()), ConfigError);
}

TEST_CASE("explicit boundary links through open outside edges", "[rc-core]") {
  TorusGeometry g(1, 2);  // 5-cycle, edges e_i = {i, i+1}
  EdgeRegion r(g, {0});
  // Edges 1..4 open outside: the endpoints of edge 0 are joined around the cycle.
  auto bc = BoundaryCondition::explicit_open({1, 2, 3, 4});
  CHECK(cluster_count(r, EdgeConfiguration(1, false), bc).kappa == 1);
  auto partial = BoundaryCondition::explicit_open({1, 2});
  CHECK(cluster_count(r, EdgeConfiguration(1, false), partial).kappa == 2);
  CHECK_THROWS_AS(build_region_graph(r, BoundaryCondition::explicit_open({0})), ConfigError);
}

TEST_CASE("partition function is a polynomial in e^{beta+z} - 1", "[rc-core]") {
  TorusGeometry g(1, 2);
  EdgeRegion r = EdgeRegion::whole(g);
  ClusterTable t = cluster_table(r, BoundaryCondition::periodic());
  for (cplx z : {cplx{0.0, 0.0}, cplx{0.1, 0.2}, cplx{-0.3, 0.05}}) {
    ModelParams p = params(2.5, 0.8).with_z(z);
    cplx direct = rc_partition(r, p, BoundaryCondition::periodic());
    cplx poly = t.evaluate(p);
    CHECK(std::abs(direct - poly) <= 1e-12 * std::abs(direct));
  }
}

TEST_CASE("observable expectations", "[rc-core]") {
  TorusGeometry g(2, 2);
  EdgeRegion r = single_edge(g);
  std::vector<Edge> none, A{r.edges[0]};
  CHECK(observable_expectation(r, none, params(2, kLn2), BoundaryCondition::free()).real() == Approx(1.0));
  CHECK(observable_expectation(r, A, params(2, kLn2), BoundaryCondition::free()).real() ==
        Approx(1.0 / 3.0).epsilon(1e-14));
  TorusGeometry c(1, 2);
  CHECK(std::abs(tilted_expectation(EdgeRegion::whole(c), params(2, 0.7), BoundaryCondition::periodic()) -
                 cplx{1.0}) < 1e-14);
}

TEST_CASE("G(z) equals Z(beta+z)/Z(beta)", "[rc-core]") {
  TorusGeometry c(1, 2);
  EdgeRegion r = EdgeRegion::whole(c);
  ModelParams p = params(2, 0.7).with_z({0.03, -0.02});
  cplx G = tilted_expectation(r, p, BoundaryCondition::periodic());
  cplx ratio = rc_partition(r, p, BoundaryCondition::periodic()) /
               rc_partition(r, p.with_z(0.0), BoundaryCondition::periodic());
  CHECK(std::abs(G - ratio) < 1e-13);
}

TEST_CASE("FKG sandwich over all increasing events on four edges", "[rc-core][property]") {
  TorusGeometry g(2, 1);
  // A 4-edge region: the two edges at the origin and the two at (1, 0).
  Vertex o = g.origin(), x = g.shift(o, 0, 1);
  EdgeRegion r(g, {g.edge(o, 0), g.edge(o, 1), g.edge(x, 0), g.edge(x, 1)});
  std::vector<int> all = {0, 1, 2, 3};
  std::vector<BoundaryCondition> etas = {BoundaryCondition::free(), BoundaryCondition::wired()};
  SplitMix64 rng(17);
  for (int k = 0; k < 6; ++k) {
    std::vector<Edge> open;
    for (Edge e = 0; e < g.edge_count(); ++e)
      if (!r.contains(e) && rng.uniform() < 0.5) open.push_back(e);
    etas.push_back(BoundaryCondition::explicit_open(open));
  }
  for (double q : {1.0, 2.0, 3.5}) {
    ModelParams p = params(q, 0.9);
    std::vector<std::vector<double>> laws;
    for (const auto& bc : etas) laws.push_back(rc_marginal(r, all, p, bc));
    int events = 0;
    for (std::uint32_t ev = 0; ev < (1u << 16); ++ev) {
      bool up = true;
      for (int a = 0; a < 16 && up; ++a)
        if ((ev >> a) & 1u)
          for (int b = 0; b < 16; ++b)
            if ((a & b) == a && !((ev >> b) & 1u)) {
              up = false;
              break;
            }
      if (!up) continue;
      ++events;
      std::vector<double> prob;
      for (const auto& law : laws) {
        double s = 0;
        for (int a = 0; a < 16; ++a)
          if ((ev >> a) & 1u) s += law[a];
        prob.push_back(s);
      }
      for (std::size_t i = 2; i < prob.size(); ++i) {
        REQUIRE(prob[0] <= prob[i] + 1e-12);
        REQUIRE(prob[i] <= prob[1] + 1e-12);
      }
      REQUIRE(prob[0] <= prob[1] + 1e-12);
    }
    CHECK(events == 168);  // monotone Boolean functions of four variables
  }
}

TEST_CASE("spin partition functions", "[rc-core]") {
  TorusGeometry c3(1, 1);
  CHECK(potts_partition(VertexRegion::whole(c3), params(2, kLn2), SpinBoundary::periodic()) ==
        Approx(28.0).epsilon(1e-14));
  TorusGeometry g(2, 2);
  VertexRegion one(g, {g.origin()});
  CHECK(potts_partition(one, params(3, 1.0), SpinBoundary::free()) == Approx(3.0));
  CHECK(ising_partition(one, params(2, 1.0), SpinBoundary::free()) == Approx(2.0));
  VertexRegion pair(g, {g.origin(), g.shift(g.origin(), 0, 1)});
  double b = 0.37;
  CHECK(ising_partition(pair, params(2, b), SpinBoundary::free()) ==
        Approx(2 * std::exp(b) + 2 * std::exp(-b)).epsilon(1e-14));
  CHECK(potts_partition(pair, params(3, 0.0), SpinBoundary::free()) == Approx(9.0));
  CHECK_THROWS_AS(potts_partition(pair, params(2.5, 1.0), SpinBoundary::free()), ConfigError);
}

TEST_CASE("Ising magnetization vanishes on symmetric systems", "[rc-core]") {
  TorusGeometry g(1, 2);
  VertexRegion r = VertexRegion::whole(g);
  ModelParams p = params(2, 0.6);
  const double h = 1e-5;
  p.h = h;
  double up = std::log(ising_partition(r, p, SpinBoundary::periodic()));
  p.h = -h;
  double down = std::log(ising_partition(r, p, SpinBoundary::periodic()));
  CHECK(std::abs(up - down) / (2 * h) < 1e-8);
}

TEST_CASE("Edwards-Sokal identity", "[rc-core]") {
  CHECK(es_identity_check(1, 1, params(2, kLn2)).discrepancy <= 1e-12);
  CHECK(es_identity_check(1, 1, params(2, kLn2)).lhs == Approx(28.0));
  CHECK(es_identity_check(1, 2, params(3, 0.7)).discrepancy <= 1e-12);
  CHECK(es_identity_check(1, 2, params(3, 0.0)).discrepancy == 0.0);
}

TEST_CASE("Ising-Potts bridge uses Potts at twice the inverse temperature", "[rc-core]") {
  TorusGeometry g(2, 2);
  VertexRegion box(g, g.ball(g.origin(), 1));
  for (double b : {0.2, 0.5, 1.1}) {
    for (auto bc : {SpinBoundary::free(), SpinBoundary::fixed(1), SpinBoundary::fixed(-1)}) {
      CHECK(ising_potts_bridge(box, b, 2 * b, bc).discrepancy <= 1e-12);
      CHECK(ising_potts_bridge(box, b, b, bc).discrepancy > 1e-3);
    }
  }
  TorusGeometry c(1, 3);
  CHECK(ising_potts_bridge(VertexRegion::whole(c), 0.4, 0.8, SpinBoundary::periodic()).discrepancy <= 1e-12);
}
