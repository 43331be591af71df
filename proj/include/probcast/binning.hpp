#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "probcast/core/error.hpp"
#include "probcast/grid.hpp"
#include "probcast/verification/weighted.hpp"

namespace probcast {

/// Equal-width bins over [v_min, v_max]; bin i is represented by its lower
/// bound v_min + i * width.
struct BinSpec {
  double v_min = 0.0;
  double v_max = 1.0;
  std::size_t n_bins = 100;

  BinSpec() = default;
  BinSpec(double lo, double hi, std::size_t n) : v_min(lo), v_max(hi), n_bins(n) { validate(); }

  double width() const { return (v_max - v_min) / static_cast<double>(n_bins); }
  double lower_bound(std::size_t i) const { return v_min + static_cast<double>(i) * width(); }

  void validate() const {
    detail::require(std::isfinite(v_min) && std::isfinite(v_max), "bin range must be finite");
    detail::require(v_max > v_min, "degenerate bin spec: v_max must exceed v_min");
    detail::require(n_bins >= 2, "need at least two bins");
    detail::require(n_bins <= 65535, "at most 65535 bins");
  }

  /// floor((v - v_min) / width) clamped to [0, n_bins - 1]. The quotient is
  /// corrected against lower_bound() so representatives map to themselves.
  std::size_t bin_of(double v) const {
    if (std::isnan(v)) throw NumericError("cannot discretize NaN");
    if (!(v > v_min)) return 0;
    if (v >= v_max) return n_bins - 1;
    auto b = static_cast<std::size_t>(std::floor((v - v_min) / width()));
    if (b > n_bins - 1) b = n_bins - 1;
    while (b > 0 && lower_bound(b) > v) --b;
    while (b + 1 < n_bins && lower_bound(b + 1) <= v) ++b;
    return b;
  }

  bool operator==(const BinSpec&) const = default;
};

inline void to_json(nlohmann::json& j, const BinSpec& s) {
  j = nlohmann::json{{"v_min", s.v_min}, {"v_max", s.v_max}, {"n_bins", s.n_bins}};
}
inline void from_json(const nlohmann::json& j, BinSpec& s) {
  s = BinSpec(j.at("v_min").get<double>(), j.at("v_max").get<double>(), j.at("n_bins").get<std::size_t>());
}
inline void to_json(nlohmann::ordered_json& j, const BinSpec& s) {
  j = nlohmann::ordered_json{{"v_min", s.v_min}, {"v_max", s.v_max}, {"n_bins", s.n_bins}};
}
inline void from_json(const nlohmann::ordered_json& j, BinSpec& s) {
  s = BinSpec(j.at("v_min").get<double>(), j.at("v_max").get<double>(), j.at("n_bins").get<std::size_t>());
}

/// Bin indices on a grid, row-major [lat][lon].
struct CategoricalField {
  BinSpec spec;
  std::size_t n_lat = 0;
  std::size_t n_lon = 0;
  std::vector<std::uint16_t> bins;

  std::uint16_t at(std::size_t j, std::size_t k) const { return bins[j * n_lon + k]; }
};

/// Per-gridpoint probability vectors, [lat][lon][bin].
struct DensityGrid {
  BinSpec spec;
  std::size_t n_lat = 0;
  std::size_t n_lon = 0;
  std::vector<double> probs;

  DensityGrid() = default;
  DensityGrid(BinSpec s, std::size_t nlat, std::size_t nlon)
      : spec(s), n_lat(nlat), n_lon(nlon), probs(nlat * nlon * s.n_bins, 0.0) {}

  std::size_t n_points() const { return n_lat * n_lon; }
  std::size_t n_bins() const { return spec.n_bins; }
  const double* point(std::size_t p) const { return probs.data() + p * spec.n_bins; }
  double* point(std::size_t p) { return probs.data() + p * spec.n_bins; }

  /// Throws when a gridpoint sums away from 1 by more than `tol` or has an
  /// entry outside [0, 1].
  void check_normalized(double tol = 1e-4) const {
    detail::require(probs.size() == n_points() * n_bins(), "density storage does not match its shape");
    for (std::size_t p = 0; p < n_points(); ++p) {
      const double* d = point(p);
      double s = 0.0;
      for (std::size_t i = 0; i < n_bins(); ++i) {
        if (!(d[i] >= -tol && d[i] <= 1.0 + tol))
          throw NumericError("density entry outside [0, 1] at gridpoint " + std::to_string(p));
        s += d[i];
      }
      if (std::abs(s - 1.0) > tol)
        throw NumericError("density at gridpoint " + std::to_string(p) + " sums to " + std::to_string(s));
    }
  }
};

/// Counts of values that fell outside [v_min, v_max] during discretization.
struct ClampStats {
  std::size_t below = 0;
  std::size_t above = 0;
  std::size_t total = 0;
};

/// Equal-width bins spanning the training-range extremes of one variable.
inline BinSpec fit_bins(const Dataset& ds, const VariableId& var, std::size_t n_bins, TimeRange train) {
  const auto [lo, hi] = ds.min_max(ds.index_of(var), train);
  if (!(hi > lo)) throw InvalidArgument("degenerate bin spec: " + var.to_string() + " is constant over the range");
  return BinSpec(lo, hi, n_bins);
}

inline CategoricalField discretize(const Field& field, const BinSpec& spec, ClampStats* clamps = nullptr) {
  spec.validate();
  CategoricalField out{spec, field.n_lat, field.n_lon, std::vector<std::uint16_t>(field.values.size())};
  for (std::size_t i = 0; i < field.values.size(); ++i) {
    const double v = field.values[i];
    out.bins[i] = static_cast<std::uint16_t>(spec.bin_of(v));
    if (clamps) {
      ++clamps->total;
      if (v < spec.v_min) ++clamps->below;
      if (v > spec.v_max) ++clamps->above;
    }
  }
  return out;
}

/// Field of bin representatives.
inline Field representatives(const CategoricalField& c, VariableId var = {}) {
  Field out(std::move(var), c.n_lat, c.n_lon);
  for (std::size_t i = 0; i < c.bins.size(); ++i) out.values[i] = c.spec.lower_bound(c.bins[i]);
  return out;
}

/// Per gridpoint E[X] = sum_i lower_bound(i) p(i).
inline Field expectation(const DensityGrid& d, VariableId var = {}) {
  d.check_normalized();
  Field out(std::move(var), d.n_lat, d.n_lon);
  for (std::size_t p = 0; p < d.n_points(); ++p) {
    const double* q = d.point(p);
    double s = 0.0;
    for (std::size_t i = 0; i < d.n_bins(); ++i) s += d.spec.lower_bound(i) * q[i];
    out.values[p] = s;
  }
  return out;
}

/// Per gridpoint sqrt(sum_i (x_i - mu)^2 p(i)).
inline Field density_stddev(const DensityGrid& d, VariableId var = {}) {
  const Field mu = expectation(d, var);
  Field out(std::move(var), d.n_lat, d.n_lon);
  for (std::size_t p = 0; p < d.n_points(); ++p) {
    const double* q = d.point(p);
    double s = 0.0;
    for (std::size_t i = 0; i < d.n_bins(); ++i) {
      const double e = d.spec.lower_bound(i) - mu.values[p];
      s += e * e * q[i];
    }
    out.values[p] = std::sqrt(s);
  }
  return out;
}

/// Latitude-weighted RMSE of replacing each value by its bin representative.
inline double inbuilt_rmse(const Dataset& ds, const VariableId& var, const BinSpec& spec, TimeRange split) {
  detail::require(!split.empty(), "inbuilt RMSE needs a non-empty range");
  const auto truth = ds.fields(var, split);
  std::vector<Field> rep;
  rep.reserve(truth.size());
  for (const auto& f : truth) rep.push_back(representatives(discretize(f, spec), var));
  return weighted_rmse(rep, truth, ds.grid());
}

}  // namespace probcast
