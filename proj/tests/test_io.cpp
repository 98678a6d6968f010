#include "catch_amalgamated.hpp"

#include "rcm/io.hpp"

using namespace rcm;

TEST_CASE("doubles round trip through text", "[io]") {
  SplitMix64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    double x = (rng.uniform() - 0.5) * std::pow(10.0, int(rng() % 40) - 20);
    CHECK(std::stod(format_double(x)) == x);
  }
}

TEST_CASE("CSV tables carry a schema line", "[io]") {
  CsvTable t("demo", {"a", "b"});
  t.row({"1", "x"}).row({"2", ""});
  auto d = parse_csv(t.str());
  CHECK(d.schema == "demo");
  CHECK(d.version == kFormatVersion);
  CHECK(d.columns == std::vector<std::string>{"a", "b"});
  REQUIRE(d.rows.size() == 2);
  CHECK(d.rows[1] == std::vector<std::string>{"2", ""});
  CHECK_THROWS_AS(t.row({"only one"}), ConfigError);
  CHECK_THROWS_AS(parse_csv("a,b\n1,2\n"), ConfigError);
}

TEST_CASE("schedules round trip exactly", "[io]") {
  TorusGeometry g(2, 2);
  EdgeRegion r = EdgeRegion::whole(g);
  auto s = sample_schedule({5, 6}, r.edges, 3.5);
  auto back = parse_schedule(schedule_table(s).str());
  CHECK(back.horizon() == s.horizon());
  CHECK(back.checksum() == s.checksum());
  auto empty = parse_schedule(schedule_table(UpdateSchedule(2.0, {})).str());
  CHECK(empty.empty());
  CHECK(empty.horizon() == 2.0);
}

TEST_CASE("regions and configurations round trip through JSON", "[io]") {
  TorusGeometry g(2, 3);
  EdgeRegion r(g, g.edge_block(g.origin(), 1));
  json j = json::parse(to_json(r).dump());
  EdgeRegion back = region_from_json(j, g);
  CHECK(back.edges == r.edges);
  TorusGeometry other(2, 2);
  CHECK_THROWS_AS(region_from_json(j, other), ConfigError);

  EdgeConfiguration c = EdgeConfiguration::from_mask(7, 0b1011001);
  CHECK(configuration_from_json(json::parse(to_json(c).dump())) == c);
  CHECK_THROWS_AS(configuration_from_json(json("01x")), ConfigError);
}

TEST_CASE("polymer models round trip through JSON", "[io]") {
  TorusGeometry g(1, 10);
  CoarseLattice c(g, 1);
  auto ps = all_polymers(c, 2);
  std::vector<cplx> w;
  for (std::size_t i = 0; i < ps.size(); ++i) w.emplace_back(0.01 * i, -0.002 * i);
  auto m = PolymerModel::geometric(c, ps, w);
  json j = json::parse(to_json(m).dump());
  CHECK(j["format"] == kFormatVersion);
  auto back = polymer_model_from_json(j);
  CHECK(back.weights() == m.weights());
  CHECK(back.compatibility() == m.compatibility());
  CHECK(cluster_expansion_logZ(back, 4).value() == cluster_expansion_logZ(m, 4).value());
}

TEST_CASE("classification and tail tables", "[io]") {
  TorusGeometry g(1, 10);
  CoarseLattice c(g, 1);
  SpaceTimeLattice st(c, 4.0, 2);
  auto f = bernoulli_field(st, GoodMode::Close, 0.3, 2);
  auto d = parse_csv(classification_table(f).str());
  CHECK(d.schema == "classification");
  CHECK(d.rows.size() == static_cast<std::size_t>(st.site_count()));
  CHECK(d.columns.front() == "x0");

  auto fit = tail_estimate({{1, 1, 5, 6}, {1, 7, 5}}, 1, 10, 1);
  auto t = parse_csv(tail_table(fit).str());
  CHECK(t.rows.size() == fit.curve.size());

  auto s = cluster_expansion_logZ(PolymerModel({0.1}, {{0}}), 3);
  auto sd = parse_csv(series_table(s).str());
  CHECK(sd.rows.size() == 3);
  CHECK(std::stod(sd.rows[0][1]) == Catch::Approx(0.1));
}
