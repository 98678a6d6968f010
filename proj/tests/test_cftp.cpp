#include "catch_amalgamated.hpp"

#include <cmath>

#include "rcm/cftp.hpp"
#include "rcm/stats.hpp"

using namespace rcm;

namespace {

ModelParams params(double q, double beta) {
  ModelParams p;
  p.q = q;
  p.beta = beta;
  return p;
}

// Chi-square of CFTP window samples against the exact window marginal.
double cftp_chi_square(const EdgeRegion& vol, std::span<const Edge> window, const ModelParams& p,
                       const BoundaryCondition& bc, int samples, std::uint64_t seed, int* dof) {
  auto pos = window_positions(vol, window);
  auto law = rc_marginal(vol, pos, p, bc);
  std::vector<double> counts(law.size(), 0.0);
  for (int k = 0; k < samples; ++k) {
    auto r = cftp_sample({seed, std::uint64_t(k)}, vol, window, p, bc);
    REQUIRE(r.coalesced);
    counts[r.sample.mask()] += 1;
  }
  return chi_square_statistic(counts, law, 5.0, dof);
}

}  // namespace

TEST_CASE("CFTP on a single edge matches the exact law", "[cftp][statistics]") {
  TorusGeometry g(2, 2);
  EdgeRegion vol(g, {g.edge(g.origin(), 0)});
  for (auto bc : {BoundaryCondition::free(), BoundaryCondition::wired()}) {
    int dof = 0;
    double chi2 = cftp_chi_square(vol, vol.edges, params(2, std::log(2.0)), bc, 4000, 11, &dof);
    CHECK(dof == 1);
    CHECK(chi2 < 10.83);  // 99.9% quantile, 1 dof
  }
}

TEST_CASE("CFTP on the 3-cycle", "[cftp][statistics]") {
  TorusGeometry g(1, 1);
  EdgeRegion vol = EdgeRegion::whole(g);
  int dof = 0;
  double chi2 = cftp_chi_square(vol, vol.edges, params(3, 0.9), BoundaryCondition::periodic(), 4000, 12, &dof);
  CHECK(dof == 7);
  CHECK(chi2 < 24.32);  // 99.9% quantile, 7 dof
}

TEST_CASE("CFTP window on a box with wired boundary", "[cftp][statistics]") {
  TorusGeometry g(2, 2);
  EdgeRegion vol(g, g.edge_block(g.origin(), 1));
  std::vector<Edge> window = {vol.edges[0], vol.edges[1], vol.edges[5]};
  int dof = 0;
  double chi2 = cftp_chi_square(vol, window, params(2, 0.8), BoundaryCondition::wired(), 3000, 13, &dof);
  CHECK(dof >= 5);
  CHECK(chi2 < 24.32);
}

TEST_CASE("CFTP samples do not depend on further doubling", "[cftp]") {
  TorusGeometry g(2, 2);
  EdgeRegion vol(g, g.edge_block(g.origin(), 1));
  ModelParams p = params(2, 0.9);
  for (std::uint64_t k = 0; k < 30; ++k) {
    auto r = cftp_sample({5, k}, vol, vol.edges, p, BoundaryCondition::free());
    REQUIRE(r.coalesced);
    // Once coalesced, every deeper start gives the same state at time 0.
    auto deeper = ScheduleSource({5, k}).schedule(vol.edges, 4 * r.horizon);
    Sandwich sw = sandwich_evolve(deeper, vol, p, deeper.horizon(), BoundaryCondition::free(),
                                  BoundaryCondition::free());
    CHECK(sw.low == r.sample);
    CHECK(sw.high == r.sample);
  }
}

TEST_CASE("CFTP reports failure at the cap", "[cftp]") {
  TorusGeometry g(2, 2);
  EdgeRegion vol = EdgeRegion::whole(g);
  DoublingPolicy tiny{0.01, 0.02};
  auto r = cftp_sample({1, 1}, vol, vol.edges, params(2, 3.0), BoundaryCondition::periodic(), tiny);
  CHECK_FALSE(r.coalesced);
  CHECK(r.sample.size() == 0);
}

TEST_CASE("CFTP is reproducible", "[cftp]") {
  TorusGeometry g(2, 1);
  EdgeRegion vol = EdgeRegion::whole(g);
  auto a = cftp_sample({8, 8}, vol, vol.edges, params(2, 0.7), BoundaryCondition::periodic());
  auto b = cftp_sample({8, 8}, vol, vol.edges, params(2, 0.7), BoundaryCondition::periodic());
  REQUIRE(a.coalesced);
  CHECK(a.sample == b.sample);
  CHECK(a.horizon == b.horizon);
  CHECK(a.schedule_checksum == b.schedule_checksum);
}

TEST_CASE("window outside the volume is rejected", "[cftp]") {
  TorusGeometry g(2, 2);
  EdgeRegion vol(g, {0, 1});
  std::vector<Edge> w = {7};
  CHECK_THROWS_AS(cftp_sample({1, 1}, vol, w, params(2, 1.0), BoundaryCondition::free()), ConfigError);
}

TEST_CASE("torus equilibrium sample flags exactness", "[cftp]") {
  TorusGeometry g(1, 2);
  auto s = torus_equilibrium_sample({2, 2}, g, params(2, 0.1), 200.0);
  CHECK(s.exact);
  CHECK(s.config.size() == static_cast<std::size_t>(g.edge_count()));
}
