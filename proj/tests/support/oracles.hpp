#pragma once

// Brute-force reference implementations used as test oracles. They share
// no code with the library beyond the data types.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "probcast/binning.hpp"
#include "probcast/core/random.hpp"
#include "probcast/grid.hpp"

namespace probcast::tcheck {

using ld = long double;

inline std::vector<ld> oracle_lat_weights(const GridSpec& g) {
  std::vector<ld> w;
  ld mean = 0;
  for (double lat : g.latitudes_deg) {
    ld c = std::abs(lat) == 90.0 ? 0.0L : std::cos(static_cast<ld>(lat) * std::numbers::pi_v<ld> / 180.0L);
    w.push_back(c);
    mean += c;
  }
  mean /= static_cast<ld>(w.size());
  for (auto& x : w) x /= mean;
  return w;
}

inline double oracle_weighted_rmse(const std::vector<Field>& pred, const std::vector<Field>& truth, const GridSpec& g) {
  const auto w = oracle_lat_weights(g);
  ld total = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    ld s = 0;
    for (std::size_t k = 0; k < g.n_lon(); ++k)
      for (std::size_t j = 0; j < g.n_lat(); ++j) {
        const ld e = static_cast<ld>(pred[t].at(j, k)) - truth[t].at(j, k);
        s += w[j] * e * e;
      }
    total += s / static_cast<ld>(g.size());
  }
  return static_cast<double>(std::sqrt(total / static_cast<ld>(pred.size())));
}

struct OracleCi {
  double mse, lo, hi;
};

inline OracleCi oracle_mse_ci(const std::vector<Field>& pred, const std::vector<Field>& truth, const GridSpec& g) {
  const auto w = oracle_lat_weights(g);
  std::vector<ld> e;
  for (std::size_t t = 0; t < pred.size(); ++t)
    for (std::size_t j = 0; j < g.n_lat(); ++j)
      for (std::size_t k = 0; k < g.n_lon(); ++k) {
        const ld d = static_cast<ld>(pred[t].at(j, k)) - truth[t].at(j, k);
        e.push_back(w[j] * d * d);
      }
  const ld n = static_cast<ld>(e.size());
  ld m = 0, sq = 0;
  for (ld x : e) m += x;
  m /= n;
  for (ld x : e) sq += x * x;
  const ld var = sq / n - m * m;
  const ld half = 1.96L * std::sqrt(var / n);
  return {static_cast<double>(m), static_cast<double>(m - half), static_cast<double>(m + half)};
}

inline double oracle_expectation(const double* p, const BinSpec& s) {
  ld e = 0;
  for (std::size_t i = 0; i < s.n_bins; ++i)
    e += (static_cast<ld>(s.v_min) + static_cast<ld>(i) * (static_cast<ld>(s.v_max) - s.v_min) / s.n_bins) * p[i];
  return static_cast<double>(e);
}

inline double oracle_stddev(const double* p, const BinSpec& s) {
  const ld mu = oracle_expectation(p, s);
  ld v = 0;
  for (std::size_t i = 0; i < s.n_bins; ++i) {
    const ld x = static_cast<ld>(s.v_min) + static_cast<ld>(i) * (static_cast<ld>(s.v_max) - s.v_min) / s.n_bins;
    v += (x - mu) * (x - mu) * p[i];
  }
  return static_cast<double>(std::sqrt(v));
}

/// Midpoint Riemann sum of (F(z) - 1{y <= z})^2 over [a, b], F the step CDF
/// with mass p_i at the bin lower bounds. The cells are aligned so that every
/// bin edge and y is a cell boundary; `steps` cells are shared among the
/// pieces in proportion to their length.
inline double oracle_crps_riemann(const double* p, const BinSpec& s, double y, double a, double b, std::size_t steps) {
  std::vector<ld> cuts{static_cast<ld>(a), static_cast<ld>(b)};
  for (std::size_t i = 0; i < s.n_bins; ++i) {
    const ld x = static_cast<ld>(s.v_min) + static_cast<ld>(i) * (static_cast<ld>(s.v_max) - s.v_min) / s.n_bins;
    if (x > a && x < b) cuts.push_back(x);
  }
  if (y > a && y < b) cuts.push_back(y);
  std::sort(cuts.begin(), cuts.end());
  const ld len = static_cast<ld>(b) - a;
  ld total = 0, cdf = 0;
  std::size_t next = 0;
  for (std::size_t c = 0; c + 1 < cuts.size(); ++c) {
    const ld lo = cuts[c], hi = cuts[c + 1];
    if (!(hi > lo)) continue;
    const std::size_t n = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(steps * ((hi - lo) / len))));
    const ld dz = (hi - lo) / static_cast<ld>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const ld z = lo + (static_cast<ld>(i) + 0.5L) * dz;
      while (next < s.n_bins &&
             static_cast<ld>(s.v_min) + static_cast<ld>(next) * (static_cast<ld>(s.v_max) - s.v_min) / s.n_bins <= z)
        cdf += p[next++];
      const ld h = z >= y ? 1.0L : 0.0L;
      total += (cdf - h) * (cdf - h) * dz;
    }
  }
  return static_cast<double>(total);
}

inline std::vector<double> random_density(Rng& rng, std::size_t n, double sparsity = 0.0) {
  std::vector<double> p(n);
  double s = 0.0;
  for (auto& x : p) {
    x = uniform01(rng) < sparsity ? 0.0 : -std::log(1.0 - uniform01(rng));
    s += x;
  }
  if (s == 0.0) {
    p[uniform_index(rng, n)] = 1.0;
    return p;
  }
  for (auto& x : p) x /= s;
  return p;
}

inline DensityGrid random_density_grid(Rng& rng, const BinSpec& spec, std::size_t nl, std::size_t nk) {
  DensityGrid d(spec, nl, nk);
  for (std::size_t q = 0; q < d.n_points(); ++q) {
    const auto p = random_density(rng, spec.n_bins, 0.3);
    std::copy(p.begin(), p.end(), d.point(q));
  }
  return d;
}

inline Field random_field(Rng& rng, std::size_t nl, std::size_t nk, double lo, double hi) {
  Field f({"x", kSurfaceLevel}, nl, nk);
  for (auto& v : f.values) v = uniform(rng, lo, hi);
  return f;
}

inline GridSpec regular_grid(std::size_t nl, std::size_t nk) { return GridSpec::regular(nl, nk); }

inline bool rel_close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace probcast::tcheck
