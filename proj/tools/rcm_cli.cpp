// rcm: experiment driver for the random-cluster toolkit.
//
// Every subcommand writes its data files plus manifest.json into --out.
// The manifest holds the full resolved configuration and results and is
// byte-identical across reruns with the same configuration; wall-clock time
// goes to timing.json so that it does not break that property.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "rcm/io.hpp"
#include "rcm/rcm.hpp"

namespace fs = std::filesystem;
using namespace rcm;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// Grid syntax: "v", "v1,v2,...", or "start:stop:count" (inclusive, evenly
// spaced).
std::vector<double> parse_grid(const std::string& text, const std::string& flag) {
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(flag + ": cannot parse '" + s + "' as a number");
    }
  };
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw ConfigError(flag + ": range grid must be start:stop:count");
    double a = number(parts[0]), b = number(parts[1]);
    double n = number(parts[2]);
    if (n < 1 || n != std::floor(n) || n > 1e6) throw ConfigError(flag + ": grid count must be a positive integer");
    int count = static_cast<int>(n);
    for (int i = 0; i < count; ++i) out.push_back(count == 1 ? a : a + (b - a) * i / (count - 1));
    return out;
  }
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ',');) out.push_back(number(p));
  if (out.empty()) throw ConfigError(flag + ": empty grid");
  return out;
}

struct Options {
  int dim = 1;
  int half_side = 1;
  int coarse_scale = 1;
  double alpha = 5.0;
  double beta = std::numbers::ln2;
  double q = 2.0;
  std::string z_re = "0";
  std::string z_im = "0";
  std::size_t trials = 1000;
  std::uint64_t seed = 1;
  int max_order = 6;
  std::string out = "rcm-out";

  int layers = 4;
  std::string mode = "close";
  std::string bc = "periodic";
  unsigned threads = 0;  // 0 = hardware concurrency
  int edge_cap = kDefaultEdgeCap;
  std::uint64_t spin_cap = kDefaultSpinCap;
  double horizon_cap = 1 << 16;
  double time = 10.0;
  std::string start = "closed";
  std::string a_grid = "1.5,2,3";
  std::string coupling = "graphical";
  bool exact_weights = false;
  int max_polymer_size = 12;
  std::vector<int> edges;
  std::string model;

  json to_json() const {
    return {{"dim", dim},
            {"half_side", half_side},
            {"coarse_scale", coarse_scale},
            {"alpha", alpha},
            {"beta", beta},
            {"q", q},
            {"z_re", z_re},
            {"z_im", z_im},
            {"trials", trials},
            {"seed", seed},
            {"max_order", max_order},
            {"layers", layers},
            {"mode", mode},
            {"bc", bc},
            {"edge_cap", edge_cap},
            {"spin_cap", spin_cap},
            {"horizon_cap", horizon_cap},
            {"time", time},
            {"start", start},
            {"a", a_grid},
            {"coupling", coupling},
            {"exact_weights", exact_weights},
            {"max_polymer_size", max_polymer_size},
            {"edges", edges},
            {"model", model}};
  }

  ModelParams params() const {
    ModelParams p;
    p.q = q;
    p.beta = beta;
    require(std::isfinite(q) && q > 0, "--q must be positive");
    require(std::isfinite(beta) && beta >= 0, "--beta must be non-negative");
    return p;
  }

  std::vector<cplx> z_grid() const {
    std::vector<cplx> zs;
    for (double re : parse_grid(z_re, "--z-re"))
      for (double im : parse_grid(z_im, "--z-im")) zs.emplace_back(re, im);
    return zs;
  }

  GoodMode good_mode() const {
    if (mode == "close") return GoodMode::Close;
    if (mode == "open") return GoodMode::Open;
    throw ConfigError("--mode must be 'open' or 'close'");
  }

  BoundaryCondition boundary() const {
    if (bc == "free") return BoundaryCondition::free();
    if (bc == "wired") return BoundaryCondition::wired();
    if (bc == "periodic") return BoundaryCondition::periodic();
    throw ConfigError("--bc must be free, wired or periodic");
  }

  unsigned worker_count() const { return threads ? threads : default_threads(); }

  CoarseParams coarse() const {
    CoarseParams cp;
    cp.L = coarse_scale;
    cp.alpha = alpha;
    return cp;
  }

  PressureConfig pressure_config() const {
    PressureConfig cfg;
    cfg.coupling.dim = dim;
    cfg.coupling.half_side = half_side;
    cfg.coupling.coarse = coarse();
    cfg.coupling.layers = layers;
    cfg.coupling.mode = good_mode();
    cfg.coupling.params = params();
    cfg.coupling.cftp.cap = horizon_cap;
    if (coupling == "graphical") cfg.coupling.kind = CouplingKind::Graphical;
    else if (coupling == "planted") cfg.coupling.kind = CouplingKind::Planted;
    else throw ConfigError("--coupling must be 'graphical' or 'planted'");
    cfg.max_order = max_order;
    cfg.max_polymer_size = max_polymer_size;
    cfg.samples = trials;
    cfg.seed = seed;
    cfg.exact_weights = exact_weights;
    cfg.threads = worker_count();
    return cfg;
  }
};

// Collects output files and results; written once at the end, also on
// failure.
class Run {
 public:
  Run(std::string subcommand, const Options& o) : sub_(std::move(subcommand)), opt_(o) {}

  void write(const std::string& name, const std::string& text) {
    std::ofstream f(dir() / name, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + (dir() / name).string());
    f << text;
    files_.push_back(name);
  }
  void write(const std::string& name, const CsvTable& t) { write(name, t.str()); }
  void write(const std::string& name, const json& j) { write(name, j.dump(2) + "\n"); }

  json& results() { return results_; }

  void finish(const std::optional<json>& error, double seconds) {
    json m;
    m["tool"] = "rcm";
    m["version"] = kToolVersion;
    m["format"] = kFormatVersion;
    m["json_library"] = std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                        std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                        std::to_string(NLOHMANN_JSON_VERSION_PATCH);
    m["subcommand"] = sub_;
    m["seed"] = opt_.seed;
    m["config"] = opt_.to_json();
    m["status"] = error ? "error" : "ok";
    if (error) m["error"] = *error;
    m["results"] = results_;
    m["outputs"] = files_;
    std::error_code ec;
    fs::create_directories(opt_.out, ec);
    if (ec) return;
    std::ofstream(dir() / "manifest.json", std::ios::binary) << m.dump(2) << "\n";
    json t = {{"subcommand", sub_}, {"wall_seconds", seconds}};
    std::ofstream(dir() / "timing.json", std::ios::binary) << t.dump(2) << "\n";
  }

 private:
  fs::path dir() const { return fs::path(opt_.out); }

  std::string sub_;
  const Options& opt_;
  std::vector<std::string> files_;
  json results_ = json::object();
};

std::string bits(const EdgeConfiguration& c) {
  std::string s;
  for (std::size_t i = 0; i < c.size(); ++i) s += c[i] ? '1' : '0';
  return s;
}

// Volume for the sampling subcommands: the whole torus for periodic
// boundary, else the box E_N inside a torus one larger.
struct Volume {
  std::unique_ptr<TorusGeometry> torus;  // the region points into it
  EdgeRegion region;
};

Volume make_volume(const Options& o) {
  if (o.boundary().kind == BoundaryCondition::Kind::Periodic) {
    auto g = std::make_unique<TorusGeometry>(o.dim, o.half_side);
    EdgeRegion r = EdgeRegion::whole(*g);
    return {std::move(g), std::move(r)};
  }
  auto g = std::make_unique<TorusGeometry>(o.dim, o.half_side + 1);
  EdgeRegion r(*g, g->edge_block(g->origin(), o.half_side));
  return {std::move(g), std::move(r)};
}

// Subcommands.

void run_enumerate(const Options& o, Run& run) {
  ModelParams p = o.params();
  TorusGeometry g(o.dim, o.half_side);
  EdgeRegion whole = EdgeRegion::whole(g);
  CsvTable t("enumerate", {"quantity", "z_re", "z_im", "value_re", "value_im"});
  auto row = [&](const std::string& q, cplx z, cplx v) {
    t.row({q, format_double(z.real()), format_double(z.imag()), format_double(v.real()), format_double(v.imag())});
  };
  double zrc = rc_partition(whole, p, BoundaryCondition::periodic(), o.edge_cap).real();
  row("Z_rc_periodic", 0.0, zrc);
  auto& r = run.results();
  r["Z_rc_periodic"] = zrc;
  if (p.q >= 2 && p.q == std::floor(p.q)) {
    double zp = potts_partition(VertexRegion::whole(g), p, SpinBoundary::periodic(), o.spin_cap);
    row("Z_potts_periodic", 0.0, zp);
    r["Z_potts_periodic"] = zp;
    r["edwards_sokal_relative_error"] = std::abs(zrc - zp) / std::abs(zp);
  }
  if (p.q == 2.0) {
    ModelParams ip;
    ip.beta = p.beta;
    double zi = ising_partition(VertexRegion::whole(g), ip, SpinBoundary::periodic(), o.spin_cap);
    row("Z_ising_periodic", 0.0, zi);
    r["Z_ising_periodic"] = zi;
  }
  for (cplx z : o.z_grid()) {
    cplx G = tilted_expectation(whole, p.with_z(z), BoundaryCondition::periodic(), o.edge_cap);
    row("G", z, G);
    row("F", z, std::log(G) / double(g.vertex_count()));
  }
  run.write("enumerate.csv", t);
}

void run_sample_cftp(const Options& o, Run& run) {
  ModelParams p = o.params();
  Volume v = make_volume(o);
  BoundaryCondition bc = o.boundary();
  DoublingPolicy pol;
  pol.cap = o.horizon_cap;
  struct Row {
    bool ok = false;
    double horizon = 0;
    std::uint64_t checksum = 0;
    std::string config;
    int open = 0;
  };
  auto rows = parallel_map<Row>(o.trials, [&](std::size_t k) {
    auto res = cftp_sample({o.seed, k}, v.region, v.region.edges, p, bc, pol);
    Row r{res.coalesced, res.horizon, res.schedule_checksum, {}, 0};
    if (res.coalesced) {
      r.config = bits(res.sample);
      r.open = static_cast<int>(std::count(r.config.begin(), r.config.end(), '1'));
    }
    return r;
  }, o.worker_count());
  CsvTable t("cftp-samples", {"replica", "horizon", "schedule_checksum", "open_edges", "configuration"});
  double mean = 0.0;
  std::size_t failed = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Row& r = rows[k];
    if (!r.ok) {
      ++failed;
      continue;
    }
    t.row({std::to_string(k), format_double(r.horizon), std::to_string(r.checksum), std::to_string(r.open), r.config});
    mean += r.open;
  }
  run.write("samples.csv", t);
  run.results()["edges"] = v.region.size();
  run.results()["coalesced"] = rows.size() - failed;
  run.results()["mean_open_fraction"] =
      rows.size() > failed ? mean / double(rows.size() - failed) / v.region.size() : 0.0;
  if (failed) throw NotCoalesced(std::to_string(failed) + " replicas hit the horizon cap");
}

void run_glauber(const Options& o, Run& run) {
  require(o.time > 0, "--time must be positive");
  require(o.start == "closed" || o.start == "open", "--start must be 'closed' or 'open'");
  ModelParams p = o.params();
  Volume v = make_volume(o);
  BoundaryPath path = BoundaryPath::constant(o.boundary());
  const int steps = static_cast<int>(std::ceil(o.time));
  auto traj = parallel_map<std::vector<int>>(o.trials, [&](std::size_t k) {
    UpdateSchedule s = ScheduleSource({o.seed, k}).schedule(v.region.edges, o.time);
    EdgeConfiguration w0(v.region.size(), o.start == "open");
    std::vector<int> open(steps + 1, 0);
    int current = o.start == "open" ? v.region.size() : 0;
    int next = 1;
    open[0] = current;
    evolve_observed(s, v.region, w0, path, p, o.time, [&](double t, GlauberDynamics& dyn) {
      double elapsed = t + o.time;
      while (next <= steps && elapsed > next) open[next++] = current;
      current = static_cast<int>(dyn.configuration().open_count());
    });
    while (next <= steps) open[next++] = current;
    return open;
  }, o.worker_count());
  CsvTable t("glauber-trajectory", {"replica", "time", "open_edges"});
  std::vector<double> mean(steps + 1, 0.0);
  for (std::size_t k = 0; k < traj.size(); ++k)
    for (int i = 0; i <= steps; ++i) {
      t.row({std::to_string(k), std::to_string(std::min<double>(i, o.time)), std::to_string(traj[k][i])});
      mean[i] += traj[k][i];
    }
  run.write("trajectory.csv", t);
  CsvTable m("glauber-mean", {"time", "mean_open_fraction"});
  for (int i = 0; i <= steps; ++i)
    m.row({format_double(std::min<double>(i, o.time)), format_double(mean[i] / double(o.trials) / v.region.size())});
  run.write("mean.csv", m);
  run.results()["edges"] = v.region.size();
}

void run_coarse_scan(const Options& o, Run& run) {
  CoarseScanConfig cfg;
  cfg.dim = o.dim;
  cfg.half_side = o.half_side;
  cfg.coarse = o.coarse();
  cfg.layers = o.layers;
  cfg.mode = o.good_mode();
  cfg.params = o.params();
  cfg.replicas = o.trials;
  cfg.seed = o.seed;
  cfg.threads = o.worker_count();
  cfg.check_surfaces = true;
  auto res = coarse_scan(cfg);
  auto fit = tail_estimate(res.sizes, 5, 200, o.seed);
  fit.L = o.coarse_scale;
  fit.p_hat = res.p_hat();
  run.write("tail.csv", tail_table(fit));
  CsvTable sizes("cluster-sizes", {"replica", "size"});
  for (std::size_t r = 0; r < res.sizes.size(); ++r)
    for (int s : res.sizes[r]) sizes.row({std::to_string(r), std::to_string(s)});
  run.write("sizes.csv", sizes);
  // Classification of replica 0, for inspection.
  TorusGeometry g(o.dim, o.half_side);
  CoarseLattice c(g, o.coarse_scale);
  SpaceTimeLattice st(c, cfg.coarse.K(), o.layers);
  run.write("classification.csv",
            classification_table(classify_field(StreamKey{o.seed, 0}, st, cfg.coarse, cfg.mode, cfg.params,
                                                o.worker_count())));
  auto& r = run.results();
  r["boxes"] = res.boxes;
  r["bad"] = res.bad;
  r["p_bad"] = res.p_hat();
  r["rate"] = fit.rate;
  r["rate_se"] = fit.rate_se;
  r["prefactor"] = fit.prefactor;
  r["r_squared"] = fit.r_squared;
  r["fit_points"] = fit.fit_points;
  r["degenerate"] = fit.degenerate;
  r["surfaces_checked"] = res.surfaces_checked;
  r["surfaces_verified"] = res.surfaces_verified;
  r["surfaces_skipped"] = res.surfaces_skipped;
  if (!res.multi_anchor.empty()) {
    auto m = multi_anchor_fit(res.multi_anchor);
    r["multi_anchor"] = {{"a", m.a}, {"c", m.c}, {"intercept", m.intercept}};
  }
}

void run_expand(const Options& o, Run& run) {
  CsvTable t("expansion", {"z_re", "z_im", "order", "partial_re", "partial_im", "envelope"});
  auto add = [&](cplx z, const SeriesResult& s, double scale) {
    for (int k = 1; k <= s.max_order; ++k) {
      cplx v = s.partial_sums[k - 1] * scale;
      t.row({format_double(z.real()), format_double(z.imag()), std::to_string(k), format_double(v.real()),
             format_double(v.imag()), format_double(s.envelope(k) * scale)});
    }
  };
  if (!o.model.empty()) {
    std::ifstream f(o.model);
    if (!f) throw ConfigError("cannot read polymer model " + o.model);
    json j;
    try {
      j = json::parse(f);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("polymer model: ") + e.what());
    }
    PolymerModel m = polymer_model_from_json(j);
    auto s = cluster_expansion_logZ(m, o.max_order);
    add(0.0, s, 1.0);
    run.write("expansion.csv", t);
    run.results()["log_Z"] = to_json(s.value());
    if (m.size() <= kPartitionExactCap) run.results()["log_Z_exact"] = to_json(std::log(polymer_partition_exact(m)));
    return;
  }
  PressureConfig cfg = o.pressure_config();
  ExpansionContext ctx(cfg);
  const double volume = ctx.torus.vertex_count();
  json models = json::array();
  for (cplx z : o.z_grid()) {
    ModelParams p = cfg.coupling.params.with_z(z);
    auto tab = ctx.weights([&](const CouplingSample& s, Site x) { return block_function_f(s.omega, ctx.coarse, x, p); },
                           cfg.symmetrize);
    PolymerModel m = ctx.model(tab);
    add(z, cluster_expansion_logZ(m, cfg.max_order), 1.0 / volume);
    json mj = to_json(m);
    mj["z"] = to_json(z);
    models.push_back(mj);
  }
  run.write("expansion.csv", t);
  run.write("polymer_models.json", models);
  run.results()["polymers"] = ctx.polymers.size();
}

void run_pressure(const Options& o, Run& run) {
  PressureConfig cfg = o.pressure_config();
  ExpansionContext ctx(cfg);
  std::vector<PressurePoint> pts;
  for (cplx z : o.z_grid()) pts.push_back(pressure_at(ctx, cfg, z));
  CsvTable t("pressure", {"z_re", "z_im", "estimate_re", "estimate_im", "exact_re", "exact_im", "has_exact",
                          "envelope", "std_error", "within_budget", "kp_ok"});
  bool all_within = true;
  for (const auto& pt : pts) {
    bool within = !pt.has_exact || std::abs(pt.estimate - pt.exact) <= pt.envelope + 3 * pt.std_error;
    all_within = all_within && within;
    t.row({format_double(pt.z.real()), format_double(pt.z.imag()), format_double(pt.estimate.real()),
           format_double(pt.estimate.imag()), format_double(pt.exact.real()), format_double(pt.exact.imag()),
           pt.has_exact ? "1" : "0", format_double(pt.envelope), format_double(pt.std_error), within ? "1" : "0",
           pt.kp_ok ? "1" : "0"});
  }
  run.write("pressure.csv", t);
  run.results()["certified_radius"] = certified_radius(pts);
  run.results()["all_within_budget"] = all_within;
  run.results()["polymers"] = ctx.polymers.size();
}

void run_correlate(const Options& o, Run& run) {
  PressureConfig cfg = o.pressure_config();
  ExpansionContext ctx(cfg);
  std::vector<std::vector<Edge>> observables;
  if (o.edges.empty()) {
    for (Edge e = 0; e < ctx.torus.edge_count(); ++e) observables.push_back({e});
  } else {
    observables.push_back(std::vector<Edge>(o.edges.begin(), o.edges.end()));
  }
  CsvTable t("correlation", {"z_re", "z_im", "edges", "estimate_re", "estimate_im", "exact_re", "exact_im",
                             "has_exact", "envelope", "std_error", "within_budget"});
  bool all_within = true;
  for (cplx z : o.z_grid())
    for (const auto& A : observables) {
      auto pt = correlation_at(ctx, cfg, z, A);
      bool within = !pt.has_exact || std::abs(pt.estimate - pt.exact) <= pt.envelope + 3 * pt.std_error;
      all_within = all_within && within;
      std::string es;
      for (std::size_t i = 0; i < A.size(); ++i) es += (i ? ";" : "") + std::to_string(A[i]);
      t.row({format_double(z.real()), format_double(z.imag()), es, format_double(pt.estimate.real()),
             format_double(pt.estimate.imag()), format_double(pt.exact.real()), format_double(pt.exact.imag()),
             pt.has_exact ? "1" : "0", format_double(pt.envelope), format_double(pt.std_error), within ? "1" : "0"});
    }
  run.write("correlation.csv", t);
  run.results()["all_within_budget"] = all_within;
}

void run_probes(const Options& o, Run& run) {
  ModelParams p = o.params();
  CsvTable t("hypothesis-probes", {"probe", "a", "value", "std_error", "exact"});
  for (double a : parse_grid(o.a_grid, "--a")) {
    auto h1 = h1_probe(o.dim, o.half_side, a, p, o.trials, o.seed);
    t.row({"H1", format_double(a), format_double(h1.tv), format_double(h1.std_error), h1.exact ? "1" : "0"});
    auto h2 = h2_probe(o.dim, std::max(1, o.half_side), a, p, o.good_mode(), o.trials, o.seed);
    t.row({"H2", format_double(a), format_double(h2.value), format_double(h2.std_error), "0"});
  }
  run.write("probes.csv", t);
}

void run_mixing(const Options& o, Run& run) {
  ModelParams p = o.params();
  CsvTable t("mixing-probe", {"alpha", "disagreement", "std_error", "trials"});
  auto e = point_mixing_probe(o.dim, o.half_side, o.alpha, p, o.trials, o.seed);
  t.row({format_double(o.alpha), format_double(e.value), format_double(e.std_error), std::to_string(o.trials)});
  run.write("mixing.csv", t);
  run.results()["disagreement"] = e.value;
  run.results()["std_error"] = e.std_error;
}

// INI reader where a [name] section holds settings for subcommand `name`.
// Keys of the active subcommand's section take precedence over top-level
// keys (the first value seen for an option wins); other subcommands'
// sections are skipped.
class SectionedConfig : public CLI::ConfigINI {
 public:
  SectionedConfig(std::string active, std::vector<std::string> known)
      : active_(std::move(active)), known_(std::move(known)) {
    arrayDelimiter(';');  // grid values such as "0,0.025" stay single strings
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::vector<CLI::ConfigItem> section, top;
    for (auto& item : CLI::ConfigINI::from_config(input)) {
      if (item.parents.empty()) {
        top.push_back(std::move(item));
        continue;
      }
      const std::string& name = item.parents.front();
      if (std::find(known_.begin(), known_.end(), name) == known_.end())
        throw CLI::ConfigError("unknown configuration section [" + name + "]");
      if (name != active_ || item.name == "++" || item.name == "--") continue;
      if (item.parents.size() != 1) throw CLI::ConfigError("nested section under [" + name + "]");
      item.parents.clear();
      section.push_back(std::move(item));
    }
    section.insert(section.end(), std::make_move_iterator(top.begin()), std::make_move_iterator(top.end()));
    return section;
  }

 private:
  std::string active_;
  std::vector<std::string> known_;
};

json error_record(const std::string& kind, int code, const std::string& message) {
  return {{"kind", kind}, {"exit_code", code}, {"message", message}};
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Random-cluster model experiments"};
  app.set_config("--config", "", "configuration file: key = value lines, [subcommand] sections");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();

  app.add_option("--dim", o.dim, "lattice dimension d");
  app.add_option("--half-side", o.half_side, "torus half-side N (side 2N+1)");
  app.add_option("--coarse-scale", o.coarse_scale, "coarse-graining scale L");
  app.add_option("--alpha", o.alpha, "time-to-space ratio: K = alpha L (mixing probe: horizon alpha N)");
  app.add_option("--beta", o.beta, "inverse temperature beta");
  app.add_option("--q", o.q, "cluster weight q");
  app.add_option("--z-re", o.z_re, "grid of Re z: v | v1,v2,... | start:stop:count");
  app.add_option("--z-im", o.z_im, "grid of Im z, same syntax");
  app.add_option("--trials", o.trials, "replicas or samples");
  app.add_option("--seed", o.seed, "root seed");
  app.add_option("--max-order", o.max_order, "cluster-expansion order (at most 8)");
  app.add_option("--out", o.out, "output directory");
  app.add_option("--layers", o.layers, "time layers of the space-time lattice");
  app.add_option("--mode", o.mode, "good-box rule: open | close");
  app.add_option("--bc", o.bc, "boundary condition: free | wired | periodic");
  app.add_option("--threads", o.threads, "worker threads (0 = all cores); never affects results");
  app.add_option("--edge-cap", o.edge_cap, "largest edge count enumerated exactly");
  app.add_option("--spin-cap", o.spin_cap, "largest spin state count enumerated exactly");
  app.add_option("--horizon-cap", o.horizon_cap, "largest CFTP horizon");
  app.add_option("--time", o.time, "glauber-run duration");
  app.add_option("--start", o.start, "glauber-run initial state: closed | open");
  app.add_option("--a", o.a_grid, "probe-hypotheses ratio grid a");
  app.add_option("--coupling", o.coupling, "graphical | planted");
  app.add_flag("--exact-weights", o.exact_weights, "enumerate polymer weights (planted coupling)");
  app.add_option("--max-polymer-size", o.max_polymer_size, "largest polymer size in the expansion");
  app.add_option("--edges", o.edges, "correlate: edges of the observable A (default: every single edge)");
  app.add_option("--model", o.model, "expand: polymer model JSON file");

  using Handler = void (*)(const Options&, Run&);
  const std::vector<std::tuple<const char*, const char*, Handler>> subs = {
      {"enumerate", "exact partition functions and identities", run_enumerate},
      {"sample-cftp", "exact samples by coupling from the past", run_sample_cftp},
      {"glauber-run", "Glauber trajectories", run_glauber},
      {"coarse-scan", "box classification and cluster tails", run_coarse_scan},
      {"expand", "polymer series", run_expand},
      {"pressure", "pressure series against enumeration", run_pressure},
      {"correlate", "correlation ratios against enumeration", run_correlate},
      {"probe-hypotheses", "H1 and H2 probes", run_probes},
      {"mixing-probe", "point mixing of the extremal chains", run_mixing},
  };
  std::map<CLI::App*, std::pair<std::string, Handler>> handlers;
  for (auto [name, desc, fn] : subs) handlers[app.add_subcommand(name, desc)] = {name, fn};

  std::vector<std::string> names;
  for (const auto& sub : subs) names.emplace_back(std::get<0>(sub));
  std::string active;
  for (int i = 1; i < argc && active.empty(); ++i)
    if (std::find(names.begin(), names.end(), argv[i]) != names.end()) active = argv[i];
  app.config_formatter(std::make_shared<SectionedConfig>(active, names));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    json err = error_record("config", 2, e.what());
    std::string sub = "unknown";
    for (auto* s : app.get_subcommands()) sub = s->get_name();
    // Option values are assigned only after a successful parse; take the
    // raw --out so the manifest lands where the user asked.
    if (const auto& raw = app.get_option("--out")->results(); !raw.empty()) o.out = raw.back();
    Run(sub, o).finish(err, 0.0);
    std::cerr << json{{"error", err}}.dump() << "\n";
    return 2;
  }

  auto [name, fn] = handlers.at(app.get_subcommands().front());
  Run run(name, o);
  auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  std::optional<json> error;
  int code = 0;
  try {
    std::error_code ec;
    fs::create_directories(o.out, ec);
    if (ec) throw ConfigError("cannot create output directory " + o.out);
    fn(o, run);
  } catch (const Error& e) {
    code = e.exit_code();
    error = error_record(e.kind(), code, e.what());
  } catch (const std::exception& e) {
    code = 1;
    error = error_record("internal", code, e.what());
  }
  run.finish(error, elapsed());
  if (error) std::cerr << json{{"error", *error}}.dump() << "\n";
  return code;
}
