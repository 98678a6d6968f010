#pragma once

// Coupling from the past with the monotone sandwich and horizon doubling.

#include <optional>
#include <span>
#include <vector>

#include "rcm/glauber.hpp"

namespace rcm {

struct CftpResult {
  EdgeConfiguration sample;  // on the target window, in window order
  double horizon = 0.0;
  bool coalesced = false;
  std::uint64_t schedule_checksum = 0;
};

struct DoublingPolicy {
  double initial = 0.0;   // 0 means |volume|
  double cap = 1 << 16;   // largest horizon tried
};

inline std::vector<int> window_positions(const EdgeRegion& volume, std::span<const Edge> window) {
  std::vector<int> pos;
  pos.reserve(window.size());
  for (Edge e : window) {
    int p = volume.position(e);
    require(p >= 0, "target window must lie inside the volume");
    pos.push_back(p);
  }
  return pos;
}

/// Whether the extremal chains agree on the window at time 0.
inline bool coalesced(const UpdateSchedule& sched, const EdgeRegion& volume,
                      std::span<const Edge> window, const ModelParams& p,
                      const BoundaryCondition& low_bc = BoundaryCondition::free(),
                      const BoundaryCondition& high_bc = BoundaryCondition::wired()) {
  auto pos = window_positions(volume, window);
  Sandwich sw = sandwich_evolve(sched, volume, p, sched.horizon(), low_bc, high_bc);
  for (int i : pos)
    if (sw.low[i] != sw.high[i]) return false;
  return true;
}

/// Exact sample of the window marginal of the random-cluster measure on
/// `volume` with boundary `bc`. The horizon doubles from policy.initial;
/// each attempt reuses the same per-edge streams, so the shorter schedule
/// is the restriction of the longer one. Returns coalesced = false (and no
/// sample) if the cap is reached.
inline CftpResult cftp_sample(StreamKey key, const EdgeRegion& volume, std::span<const Edge> window,
                              const ModelParams& p, const BoundaryCondition& bc,
                              DoublingPolicy policy = {}) {
  auto pos = window_positions(volume, window);
  ScheduleSource source(key);
  double t = policy.initial > 0 ? policy.initial : std::max(1, volume.size());
  CftpResult res;
  while (t <= policy.cap) {
    UpdateSchedule sched = source.schedule(volume.edges, t);
    Sandwich sw = sandwich_evolve(sched, volume, p, t, bc, bc);
    bool agree = true;
    for (int i : pos) agree = agree && sw.low[i] == sw.high[i];
    res.horizon = t;
    res.schedule_checksum = sched.checksum();
    if (agree) {
      res.coalesced = true;
      res.sample = EdgeConfiguration(pos.size());
      for (std::size_t i = 0; i < pos.size(); ++i) res.sample.set(i, sw.low[pos[i]]);
      return res;
    }
    t *= 2;
  }
  return res;
}

struct TorusSample {
  EdgeConfiguration config;  // over every torus edge
  bool exact = false;        // the extremal chains coalesced at this horizon
};

/// Runs the periodic dynamics from the all-open configuration for time t.
/// Flagged exact when the sandwich coalesced on the whole torus by time 0.
inline TorusSample torus_equilibrium_sample(StreamKey key, const TorusGeometry& g,
                                            const ModelParams& p, double t) {
  require(t > 0, "horizon must be > 0");
  EdgeRegion whole = EdgeRegion::whole(g);
  UpdateSchedule sched = ScheduleSource(key).schedule(whole.edges, t);
  auto per = BoundaryCondition::periodic();
  Sandwich sw = sandwich_evolve(sched, whole, p, t, per, per);
  return {sw.high, sw.low == sw.high};
}

}  // namespace rcm
