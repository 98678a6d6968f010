#pragma once

// Small statistics toolkit: total variation, least-squares lines, binomial
// intervals and a seeded bootstrap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "rcm/errors.hpp"
#include "rcm/rng.hpp"

namespace rcm {

/// Total variation distance between two distributions on the same index set.
inline double total_variation(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "distributions must have equal support size");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

/// Empirical distribution of integer outcomes in [0, support).
inline std::vector<double> empirical_distribution(std::span<const std::uint64_t> outcomes,
                                                  std::size_t support) {
  std::vector<double> h(support, 0.0);
  for (auto o : outcomes) {
    require(o < support, "outcome outside support");
    h[o] += 1.0;
  }
  if (!outcomes.empty())
    for (auto& x : h) x /= double(outcomes.size());
  return h;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares y = intercept + slope * x.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "fit_line: size mismatch");
  require(x.size() >= 2, "fit_line needs at least two points");
  const double n = double(x.size());
  double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0, "fit_line: x values are all equal");
  LineFit f;
  f.points = x.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double r = y[i] - f.intercept - f.slope * x[i];
    sse += r * r;
  }
  f.r_squared = syy > 0 ? 1.0 - sse / syy : 1.0;
  f.slope_se = x.size() > 2 ? std::sqrt(sse / (n - 2) / sxx) : 0.0;
  return f;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Wilson score interval for a binomial proportion.
inline Interval wilson_interval(std::size_t hits, std::size_t trials, double zcrit = 1.959963984540054) {
  if (trials == 0) return {0.0, 1.0};
  double n = double(trials), ph = double(hits) / n, z2 = zcrit * zcrit;
  double centre = (ph + z2 / (2 * n)) / (1 + z2 / n);
  double half = zcrit * std::sqrt(ph * (1 - ph) / n + z2 / (4 * n * n)) / (1 + z2 / n);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

inline double mean(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

inline double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double m = mean(v), s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size() - 1));
}

/// Bootstrap over `units` resampling units: `stat(indices)` receives a
/// resample (with replacement) and returns a statistic. Non-finite values
/// are kept out of the spread. Returns the standard deviation over replicates.
template <class Stat>
double bootstrap_se(std::size_t units, std::size_t replicates, std::uint64_t seed, Stat&& stat) {
  require(units >= 1, "bootstrap needs at least one unit");
  SplitMix64 rng(seed);
  std::vector<std::size_t> idx(units);
  std::vector<double> values;
  values.reserve(replicates);
  for (std::size_t b = 0; b < replicates; ++b) {
    for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform() * double(units)) % units;
    double v = stat(std::span<const std::size_t>(idx));
    if (std::isfinite(v)) values.push_back(v);
  }
  return sample_std(values);
}

/// Pearson chi-square statistic of observed counts against expected
/// probabilities, pooling cells with expected count below `min_expected`.
inline double chi_square_statistic(std::span<const double> observed_counts,
                                   std::span<const double> probabilities, double min_expected = 5.0,
                                   int* degrees_of_freedom = nullptr) {
  require(observed_counts.size() == probabilities.size(), "chi-square size mismatch");
  double n = std::accumulate(observed_counts.begin(), observed_counts.end(), 0.0);
  double stat = 0, pool_o = 0, pool_e = 0;
  int cells = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    double e = n * probabilities[i];
    if (e < min_expected) {
      pool_o += observed_counts[i];
      pool_e += e;
      continue;
    }
    stat += (observed_counts[i] - e) * (observed_counts[i] - e) / e;
    ++cells;
  }
  if (pool_e > 0) {
    stat += (pool_o - pool_e) * (pool_o - pool_e) / pool_e;
    ++cells;
  }
  if (degrees_of_freedom) *degrees_of_freedom = std::max(cells - 1, 0);
  return stat;
}

}  // namespace rcm
