#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "probcast/binning.hpp"
#include "probcast/verification/weighted.hpp"

namespace probcast {

/// Integral of (F(z) - 1{y <= z})^2 over the real line for the step CDF
/// with mass p_i at x_i = lower_bound(i). The density is renormalized so the
/// CDF reaches exactly 1 after the last representative.
inline double crps(const double* p, const BinSpec& spec, double y) {
  detail::require(std::isfinite(y), "CRPS needs a finite observation");
  const std::size_t n = spec.n_bins;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    detail::require(p[i] >= -1e-9, "CRPS needs non-negative probabilities");
    total += p[i];
  }
  if (std::abs(total - 1.0) > 1e-4) throw NumericError("CRPS density is not normalized (sum " + std::to_string(total) + ")");
  const double x0 = spec.lower_bound(0), xl = spec.lower_bound(n - 1);
  double s = 0.0;
  if (y < x0) s += x0 - y;
  double cdf = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    cdf += p[i] / total;
    const double a = spec.lower_bound(i), b = spec.lower_bound(i + 1);
    const double lo = cdf * cdf, hi = (cdf - 1.0) * (cdf - 1.0);
    if (y <= a)
      s += hi * (b - a);
    else if (y >= b)
      s += lo * (b - a);
    else
      s += lo * (y - a) + hi * (b - y);
  }
  if (y > xl) s += y - xl;
  return s;
}

/// Per-gridpoint CRPS averaged over all points and times; unweighted unless
/// `latitude_weighted`.
inline double mean_crps(const std::vector<DensityGrid>& densities, const std::vector<Field>& obs,
                        const GridSpec* grid = nullptr, bool latitude_weighted = false) {
  detail::require(!densities.empty() && densities.size() == obs.size(), "one observation field per density grid");
  std::vector<double> w;
  if (latitude_weighted) {
    detail::require(grid != nullptr, "weighted CRPS needs the grid");
    w = latitude_weights(*grid);
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < densities.size(); ++t) {
    const auto& d = densities[t];
    detail::require(d.n_lat == obs[t].n_lat && d.n_lon == obs[t].n_lon, "density/observation shape mismatch");
    for (std::size_t q = 0; q < d.n_points(); ++q) {
      const double c = crps(d.point(q), d.spec, obs[t].values[q]);
      total += latitude_weighted ? w[q / d.n_lon] * c : c;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

/// Percentages of points whose truth lies in each interval around the
/// density mean mu with standard deviation sigma (bounds inclusive).
struct CoverageTable {
  double ci95 = 0.0;      // mu +- 1.960 sigma / sqrt(n_bins)
  double ci99 = 0.0;      // mu +- 2.576 sigma / sqrt(n_bins)
  double one_sigma = 0.0;
  double two_sigma = 0.0;
  std::size_t n_points = 0;
};

inline CoverageTable coverage_stats(const std::vector<DensityGrid>& densities, const std::vector<Field>& truth) {
  detail::require(!densities.empty() && densities.size() == truth.size(), "one truth field per density grid");
  std::size_t in95 = 0, in99 = 0, in1 = 0, in2 = 0, n = 0;
  for (std::size_t t = 0; t < densities.size(); ++t) {
    const auto mu = expectation(densities[t]);
    const auto sd = density_stddev(densities[t]);
    detail::require(truth[t].same_shape(mu), "density/truth shape mismatch");
    const double root_n = std::sqrt(static_cast<double>(densities[t].n_bins()));
    for (std::size_t q = 0; q < mu.values.size(); ++q) {
      const double dev = std::abs(truth[t].values[q] - mu.values[q]), s = sd.values[q];
      in95 += dev <= 1.960 * s / root_n;
      in99 += dev <= 2.576 * s / root_n;
      in1 += dev <= s;
      in2 += dev <= 2.0 * s;
      ++n;
    }
  }
  const double pct = 100.0 / static_cast<double>(n);
  return {in95 * pct, in99 * pct, in1 * pct, in2 * pct, n};
}

/// Percentage of points whose true bin is among the k most probable; ties
/// rank the lower bin index first.
inline double topk_match(const std::vector<DensityGrid>& densities, const std::vector<CategoricalField>& truth,
                         std::size_t k) {
  detail::require(!densities.empty() && densities.size() == truth.size(), "one truth field per density grid");
  detail::require(k >= 1 && k <= densities.front().n_bins(), "k must lie in [1, n_bins]");
  std::size_t hit = 0, n = 0;
  for (std::size_t t = 0; t < densities.size(); ++t) {
    const auto& d = densities[t];
    detail::require(truth[t].bins.size() == d.n_points(), "density/truth shape mismatch");
    for (std::size_t q = 0; q < d.n_points(); ++q) {
      const double* p = d.point(q);
      const std::size_t tb = truth[t].bins[q];
      detail::require(tb < d.n_bins(), "true bin out of range");
      std::size_t rank = 0;
      for (std::size_t i = 0; i < d.n_bins(); ++i) rank += p[i] > p[tb] || (p[i] == p[tb] && i < tb);
      hit += rank < k;
      ++n;
    }
  }
  return 100.0 * static_cast<double>(hit) / static_cast<double>(n);
}

struct ThresholdMap {
  double threshold = 0.0;
  Field probability;
};

/// P(X < threshold) treating each bin's mass as uniform over the bin.
inline ThresholdMap cdf_threshold(const DensityGrid& d, double threshold) {
  detail::require(std::isfinite(threshold), "threshold must be finite");
  ThresholdMap tm{threshold, Field({"cdf", kSurfaceLevel}, d.n_lat, d.n_lon)};
  const double w = d.spec.width();
  for (std::size_t q = 0; q < d.n_points(); ++q) {
    const double* p = d.point(q);
    double s = 0.0;
    for (std::size_t i = 0; i < d.n_bins(); ++i) {
      const double lo = d.spec.lower_bound(i), hi = i + 1 == d.n_bins() ? d.spec.v_max : lo + w;
      if (hi <= threshold)
        s += p[i];
      else if (lo < threshold)
        s += p[i] * (threshold - lo) / (hi - lo);
    }
    tm.probability.values[q] = std::clamp(s, 0.0, 1.0);
  }
  return tm;
}

}  // namespace probcast
