#pragma once

// Serialization: versioned CSV tables, JSON for regions, configurations and
// polymer models, and a text round trip for update schedules.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rcm/coarse.hpp"
#include "rcm/glauber.hpp"
#include "rcm/polymer.hpp"
#include "rcm/rc_core.hpp"

namespace rcm {

inline constexpr const char* kFormatVersion = "rcm-1";

using json = nlohmann::json;

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

/// A CSV table whose first line is "# <schema> <version>".
class CsvTable {
 public:
  CsvTable(std::string schema, std::vector<std::string> columns)
      : schema_(std::move(schema)), columns_(std::move(columns)) {}

  CsvTable& row(std::vector<std::string> cells) {
    require(cells.size() == columns_.size(), "CSV row has the wrong number of cells");
    rows_.push_back(std::move(cells));
    return *this;
  }

  std::string str() const {
    std::ostringstream os;
    os << "# " << schema_ << ' ' << kFormatVersion << '\n';
    write_line(os, columns_);
    for (const auto& r : rows_) write_line(os, r);
    return os.str();
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open " + path + " for writing");
    f << str();
  }

  std::size_t size() const { return rows_.size(); }

 private:
  static void write_line(std::ostream& os, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) os << ',';
      os << cells[i];
    }
    os << '\n';
  }

  std::string schema_;
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

/// Parsed CSV: schema line, header and rows (no quoting support needed for
/// the numeric tables written here).
struct CsvData {
  std::string schema;
  std::string version;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvData parse_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  CsvData d;
  require(static_cast<bool>(std::getline(is, line)) && line.rfind("# ", 0) == 0, "CSV lacks a schema line");
  std::istringstream head(line.substr(2));
  head >> d.schema >> d.version;
  require(std::getline(is, line).good() || !line.empty(), "CSV lacks a header");
  d.columns = split_csv_line(line);
  while (std::getline(is, line))
    if (!line.empty()) d.rows.push_back(split_csv_line(line));
  return d;
}

// Update schedules.

inline CsvTable schedule_table(const UpdateSchedule& s) {
  CsvTable t("schedule", {"time", "edge", "uniform"});
  t.row({format_double(s.horizon()), "-1", "0"});  // horizon marker row
  for (const auto& e : s.events()) t.row({format_double(e.time), std::to_string(e.edge), format_double(e.uniform)});
  return t;
}

inline UpdateSchedule parse_schedule(const std::string& text) {
  CsvData d = parse_csv(text);
  require(d.schema == "schedule", "not a schedule table");
  require(!d.rows.empty() && d.rows[0].size() == 3 && d.rows[0][1] == "-1", "schedule lacks its horizon row");
  double horizon = std::stod(d.rows[0][0]);
  std::vector<UpdateEvent> ev;
  for (std::size_t i = 1; i < d.rows.size(); ++i) {
    require(d.rows[i].size() == 3, "schedule row must have three cells");
    ev.push_back({std::stod(d.rows[i][0]), std::stoi(d.rows[i][1]), std::stod(d.rows[i][2])});
  }
  return UpdateSchedule(horizon, std::move(ev));
}

// JSON.

inline json to_json(cplx z) { return json::array({z.real(), z.imag()}); }
inline cplx cplx_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline json to_json(const EdgeRegion& r) {
  return {{"dim", r.torus->dim()}, {"half_side", r.torus->half_side()}, {"edges", r.edges}};
}

/// Regions refer to a torus owned by the caller; the torus shape in the
/// document must match it.
inline EdgeRegion region_from_json(const json& j, const TorusGeometry& g) {
  require(j.at("dim").get<int>() == g.dim() && j.at("half_side").get<int>() == g.half_side(),
          "region belongs to a different torus");
  return EdgeRegion(g, j.at("edges").get<std::vector<Edge>>());
}

inline json to_json(const EdgeConfiguration& c) {
  std::string bits;
  for (std::size_t i = 0; i < c.size(); ++i) bits.push_back(c[i] ? '1' : '0');
  return bits;
}

inline EdgeConfiguration configuration_from_json(const json& j) {
  std::string bits = j.get<std::string>();
  EdgeConfiguration c(bits.size());
  for (std::size_t i = 0; i < bits.size(); ++i) {
    require(bits[i] == '0' || bits[i] == '1', "configuration string must be 0/1");
    c.set(i, bits[i] == '1');
  }
  return c;
}

inline json to_json(const PolymerModel& m) {
  json j;
  j["format"] = kFormatVersion;
  j["weights"] = json::array();
  for (auto w : m.weights()) j["weights"].push_back(to_json(w));
  j["compatible"] = m.compatibility();
  if (!m.polymers().empty()) {
    j["polymers"] = json::array();
    for (const auto& p : m.polymers()) j["polymers"].push_back(p.sites());
  }
  return j;
}

inline PolymerModel polymer_model_from_json(const json& j) {
  std::vector<cplx> w;
  for (const auto& x : j.at("weights")) w.push_back(cplx_from_json(x));
  auto d = j.at("compatible").get<std::vector<std::vector<std::uint8_t>>>();
  return PolymerModel(std::move(w), std::move(d));
}

inline json to_json(const WeightEstimate& e) {
  return {{"polymer", e.polymer.sites()},
          {"z", to_json(e.z)},
          {"value", to_json(e.value)},
          {"std_error", e.std_error},
          {"samples", e.samples},
          {"variant", e.variant == EstimatorVariant::Exact ? "exact" : "monte-carlo"}};
}

// Tables used by the experiment driver.

inline CsvTable classification_table(const ClassificationField& f) {
  const SpaceTimeLattice& st = *f.lattice;
  std::vector<std::string> cols;
  for (int k = 0; k < st.base().dim(); ++k) cols.push_back("x" + std::to_string(k));
  for (const char* c : {"layer", "mode", "verdict", "witness"}) cols.emplace_back(c);
  CsvTable t("classification", cols);
  for (const auto& b : f.boxes) {
    std::vector<std::string> r;
    for (int k : st.base().site_coords(st.spatial(b.site))) r.push_back(std::to_string(k));
    r.push_back(std::to_string(st.layer(b.site)));
    r.emplace_back(to_string(b.mode));
    r.emplace_back(b.good() ? "good" : "bad");
    r.emplace_back(to_string(b.witness));
    t.row(std::move(r));
  }
  return t;
}

inline CsvTable tail_table(const TailFit& fit) {
  CsvTable t("tail", {"k", "survival", "ci_lo", "ci_hi", "count"});
  for (const auto& p : fit.curve)
    t.row({std::to_string(p.k), format_double(p.survival), format_double(p.ci.lo), format_double(p.ci.hi),
           std::to_string(p.count)});
  return t;
}

inline CsvTable series_table(const SeriesResult& s, double scale = 1.0) {
  CsvTable t("series", {"order", "partial_re", "partial_im", "envelope"});
  for (int k = 1; k <= s.max_order; ++k) {
    cplx v = s.partial_sums[k - 1] * scale;
    t.row({std::to_string(k), format_double(v.real()), format_double(v.imag()),
           format_double(s.envelope(k) * scale)});
  }
  return t;
}

}  // namespace rcm
