#pragma once

// Graphical construction of the random-cluster Glauber dynamics: per-edge
// rate-one Poisson clocks on (-infinity, 0] with attached uniforms, and the
// deterministic map (schedule, initial configuration, boundary) -> final
// configuration.

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "rcm/connectivity.hpp"
#include "rcm/rc_core.hpp"
#include "rcm/rng.hpp"

namespace rcm {

struct UpdateEvent {
  double time = 0.0;  // in [-horizon, 0]
  Edge edge = 0;
  double uniform = 0.0;

  friend bool operator==(const UpdateEvent&, const UpdateEvent&) = default;
};

/// Time-ordered update events on [-horizon, 0]. Simultaneous events are
/// ordered by edge index; two events on the same edge at the same time are
/// rejected.
class UpdateSchedule {
 public:
  UpdateSchedule() = default;
  UpdateSchedule(double horizon, std::vector<UpdateEvent> events)
      : horizon_(horizon), events_(std::move(events)) {
    require(horizon >= 0, "schedule horizon must be >= 0");
    std::sort(events_.begin(), events_.end(), [](const UpdateEvent& a, const UpdateEvent& b) {
      return a.time != b.time ? a.time < b.time : a.edge < b.edge;
    });
    for (std::size_t i = 0; i < events_.size(); ++i) {
      const auto& ev = events_[i];
      require(ev.time <= 0.0 && ev.time >= -horizon_, "event time outside [-horizon, 0]");
      require(ev.uniform >= 0.0 && ev.uniform <= 1.0, "event uniform outside [0, 1]");
      if (i > 0 && events_[i - 1].time == ev.time && events_[i - 1].edge == ev.edge)
        throw ConfigError("duplicate event time on one edge");
    }
  }

  double horizon() const { return horizon_; }
  std::span<const UpdateEvent> events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  /// FNV-style digest of every event, for provenance of CFTP results.
  std::uint64_t checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t x) { h = splitmix64(h ^ x); };
    mix(std::bit_cast<std::uint64_t>(horizon_));
    for (const auto& e : events_) {
      mix(std::bit_cast<std::uint64_t>(e.time));
      mix(static_cast<std::uint64_t>(e.edge));
      mix(std::bit_cast<std::uint64_t>(e.uniform));
    }
    return h;
  }

 private:
  double horizon_ = 0.0;
  std::vector<UpdateEvent> events_;
};

/// Per-edge Poisson streams. Event k on edge e (counted backwards from time
/// 0) sits at depth sum_{i<=k} Exp_i and carries uniform U_k, all derived
/// from the counter hash; a longer horizon only appends deeper events, so
/// the restriction of the [-2t, 0] schedule to [-t, 0] is the [-t, 0]
/// schedule.
class ScheduleSource {
 public:
  explicit ScheduleSource(StreamKey key) : key_(key) {}
  StreamKey key() const { return key_; }

  template <class Fn>
  void for_each_event(Edge e, double horizon, Fn&& fn) const {
    double depth = 0.0;
    for (std::uint64_t k = 0;; ++k) {
      depth += counter_exponential(key_, static_cast<std::uint64_t>(e), k);
      if (depth > horizon) break;
      fn(UpdateEvent{-depth, e, counter_uniform(key_, static_cast<std::uint64_t>(e), k, Slot::Uniform)});
    }
  }

  UpdateSchedule schedule(std::span<const Edge> edges, double horizon) const {
    std::vector<UpdateEvent> ev;
    for (Edge e : edges) for_each_event(e, horizon, [&](const UpdateEvent& x) { ev.push_back(x); });
    return UpdateSchedule(horizon, std::move(ev));
  }

 private:
  StreamKey key_;
};

inline UpdateSchedule sample_schedule(StreamKey key, std::span<const Edge> edges, double horizon) {
  require(horizon > 0, "schedule horizon must be > 0");
  return ScheduleSource(key).schedule(edges, horizon);
}

/// Boundary condition as a piecewise-constant function of time: segment i
/// applies from `from_time` (inclusive) until the next segment starts.
struct BoundaryPath {
  struct Segment {
    double from_time;
    BoundaryCondition bc;
  };
  std::vector<Segment> segments;

  static BoundaryPath constant(BoundaryCondition bc) {
    return {{{-std::numeric_limits<double>::infinity(), std::move(bc)}}};
  }

  std::size_t segment_at(double t) const {
    std::size_t s = 0;
    while (s + 1 < segments.size() && segments[s + 1].from_time <= t) ++s;
    return s;
  }
};

/// State of the dynamics in a finite volume: the configuration on the
/// volume plus the connectivity structure including the boundary wiring of
/// the active boundary segment.
class GlauberDynamics {
 public:
  GlauberDynamics(const EdgeRegion& volume, const ModelParams& p, BoundaryPath path)
      : volume_(&volume), params_(p), path_(std::move(path)) {
    require(!path_.segments.empty(), "boundary path needs a segment");
    require(p.z == cplx{}, "dynamics needs real parameters");
    position_.assign(volume.torus->edge_count(), -1);
    for (int i = 0; i < volume.size(); ++i) position_[volume.edges[i]] = i;
    config_ = EdgeConfiguration(volume.size());
    activate(0);
  }

  const EdgeRegion& volume() const { return *volume_; }
  const EdgeConfiguration& configuration() const { return config_; }
  const ModelParams& params() const { return params_; }
  const RegionGraph& graph() const { return graph_; }

  void set_configuration(const EdgeConfiguration& c) {
    require(c.size() == static_cast<std::size_t>(volume_->size()), "configuration size mismatch");
    for (std::size_t i = 0; i < c.size(); ++i) {
      config_.set(i, c[i]);
      conn_.set_edge(static_cast<int>(i), c[i]);
    }
  }

  /// Switches to the boundary segment in force at time t.
  void advance_boundary(double t) {
    std::size_t s = path_.segment_at(t);
    if (s != active_) activate(s);
  }

  /// Region position of a torus edge, or -1 when outside the volume.
  int position(Edge e) const { return position_[e]; }

  bool endpoints_connected_elsewhere(int pos) {
    auto [a, b] = graph_.edge_ends[pos];
    return conn_.connected_without(a, b, pos);
  }

  /// Heat-bath probability of opening the edge at region position `pos`
  /// given the rest of the configuration and the boundary.
  double update_rate(int pos) {
    return endpoints_connected_elsewhere(pos) ? params_.p_connected() : params_.p_disconnected();
  }

  /// Applies one event; events on edges outside the volume are ignored.
  /// Returns whether the configuration changed.
  bool apply(const UpdateEvent& ev) {
    int pos = position_[ev.edge];
    if (pos < 0) return false;
    advance_boundary(ev.time);
    bool open = ev.uniform < update_rate(pos);
    if (open == config_[pos]) return false;
    config_.set(pos, open);
    conn_.set_edge(pos, open);
    return true;
  }

 private:
  void activate(std::size_t s) {
    active_ = s;
    graph_ = build_region_graph(*volume_, path_.segments[s].bc);
    std::vector<std::pair<int, int>> edges = graph_.edge_ends;
    std::vector<std::uint8_t> states(config_.bits().begin(), config_.bits().end());
    for (auto l : graph_.links) {
      edges.push_back(l);
      states.push_back(1);
    }
    conn_ = ConnectivityState(graph_.vertex_count(), std::move(edges), std::move(states));
  }

  const EdgeRegion* volume_;
  ModelParams params_;
  BoundaryPath path_;
  std::size_t active_ = 0;
  RegionGraph graph_;
  ConnectivityState conn_;
  EdgeConfiguration config_;
  std::vector<int> position_;
};

/// Runs the dynamics from omega0 using the events of `sched` up to time
/// -horizon + s. `observe(time, dyn)` is called after every applied event
/// inside the volume.
template <class Observer>
EdgeConfiguration evolve_observed(const UpdateSchedule& sched, const EdgeRegion& volume,
                                  const EdgeConfiguration& omega0, const BoundaryPath& path,
                                  const ModelParams& p, double s, Observer&& observe) {
  require(s >= 0 && s <= sched.horizon() + 1e-12, "evolve duration outside [0, horizon]");
  GlauberDynamics dyn(volume, p, path);
  dyn.advance_boundary(-sched.horizon());
  dyn.set_configuration(omega0);
  const double stop = -sched.horizon() + s;
  for (const auto& ev : sched.events()) {
    if (ev.time > stop) break;
    if (dyn.position(ev.edge) < 0) continue;
    dyn.apply(ev);
    observe(ev.time, dyn);
  }
  return dyn.configuration();
}

inline EdgeConfiguration evolve(const UpdateSchedule& sched, const EdgeRegion& volume,
                                const EdgeConfiguration& omega0, const BoundaryPath& path,
                                const ModelParams& p, double s) {
  return evolve_observed(sched, volume, omega0, path, p, s, [](double, GlauberDynamics&) {});
}

inline EdgeConfiguration evolve(const UpdateSchedule& sched, const EdgeRegion& volume,
                                const EdgeConfiguration& omega0, const BoundaryPath& path,
                                const ModelParams& p) {
  return evolve(sched, volume, omega0, path, p, sched.horizon());
}

struct Sandwich {
  EdgeConfiguration low;
  EdgeConfiguration high;
};

/// Evolves the extremal pair with one schedule: low from (all closed,
/// low_bc), high from (all open, high_bc). Throws InvariantViolation if the
/// order low <= high breaks.
inline Sandwich sandwich_evolve(const UpdateSchedule& sched, const EdgeRegion& volume,
                                const ModelParams& p, double s,
                                const BoundaryCondition& low_bc = BoundaryCondition::free(),
                                const BoundaryCondition& high_bc = BoundaryCondition::wired()) {
  Sandwich out;
  out.low = evolve(sched, volume, EdgeConfiguration(volume.size(), false),
                   BoundaryPath::constant(low_bc), p, s);
  out.high = evolve(sched, volume, EdgeConfiguration(volume.size(), true),
                    BoundaryPath::constant(high_bc), p, s);
  if (!out.low.leq(out.high))
    throw InvariantViolation("monotone sandwich violated: low chain above high chain");
  return out;
}

struct ProbabilityEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t trials = 0;
};

inline ProbabilityEstimate binomial_estimate(std::size_t hits, std::size_t trials) {
  ProbabilityEstimate e;
  e.trials = trials;
  if (trials == 0) return e;
  e.value = double(hits) / double(trials);
  e.std_error = std::sqrt(e.value * (1 - e.value) / double(trials));
  return e;
}

/// Estimates P(low and high chains disagree on the edge {0, e_1}) after
/// running the extremal chains in E_N(0) for time alpha * N.
inline ProbabilityEstimate point_mixing_probe(int dim, int half_side, double alpha,
                                              const ModelParams& p, std::size_t trials,
                                              std::uint64_t seed) {
  require(half_side >= 1, "mixing probe needs N >= 1");
  require(trials >= 1, "mixing probe needs at least one trial");
  TorusGeometry g(dim, half_side + 2);
  EdgeRegion volume(g, g.edge_block(g.origin(), half_side));
  Edge target = g.edge(g.origin(), 0);
  int pos = volume.position(target);
  double horizon = alpha * half_side;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < trials; ++r) {
    UpdateSchedule sched = ScheduleSource({seed, r}).schedule(volume.edges, horizon);
    Sandwich sw = sandwich_evolve(sched, volume, p, horizon);
    if (sw.low[pos] != sw.high[pos]) ++hits;
  }
  return binomial_estimate(hits, trials);
}

}  // namespace rcm
