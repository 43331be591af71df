#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <limits>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "probcast/core/error.hpp"

namespace probcast {

inline constexpr int kSurfaceLevel = -1;
inline constexpr int kConstantLevel = -2;

/// Regular or irregular latitude-longitude geometry.
struct GridSpec {
  std::vector<double> latitudes_deg;
  std::vector<double> longitudes_deg;

  std::size_t n_lat() const { return latitudes_deg.size(); }
  std::size_t n_lon() const { return longitudes_deg.size(); }
  std::size_t size() const { return n_lat() * n_lon(); }

  /// Cell-centred latitudes (-90 + (j + 1/2) 180/n_lat) and longitudes k 360/n_lon,
  /// the layout of the 5.625 degree reanalysis grids.
  static GridSpec regular(std::size_t n_lat, std::size_t n_lon) {
    detail::require(n_lat >= 1 && n_lon >= 1, "grid must have at least one point per axis");
    GridSpec g;
    g.latitudes_deg.resize(n_lat);
    g.longitudes_deg.resize(n_lon);
    for (std::size_t j = 0; j < n_lat; ++j)
      g.latitudes_deg[j] = -90.0 + (static_cast<double>(j) + 0.5) * 180.0 / static_cast<double>(n_lat);
    for (std::size_t k = 0; k < n_lon; ++k)
      g.longitudes_deg[k] = static_cast<double>(k) * 360.0 / static_cast<double>(n_lon);
    return g;
  }

  void validate() const {
    detail::require(n_lat() >= 1 && n_lon() >= 1, "grid must have at least one point per axis");
    for (double lat : latitudes_deg)
      detail::require(std::isfinite(lat) && std::abs(lat) <= 90.0, "latitude outside [-90, 90]");
    auto strictly_monotonic = [](const std::vector<double>& v) {
      if (v.size() < 2) return true;
      const bool up = v[1] > v[0];
      for (std::size_t i = 1; i < v.size(); ++i)
        if (up ? !(v[i] > v[i - 1]) : !(v[i] < v[i - 1])) return false;
      return true;
    };
    detail::require(strictly_monotonic(latitudes_deg), "latitudes must be strictly monotonic");
    detail::require(strictly_monotonic(longitudes_deg), "longitudes must be strictly monotonic");
    for (double lon : longitudes_deg) detail::require(std::isfinite(lon), "non-finite longitude");
    if (n_lon() >= 2)
      detail::require(std::abs(longitudes_deg.back() - longitudes_deg.front()) < 360.0,
                      "longitude span must be below 360 degrees");
  }

  bool operator==(const GridSpec&) const = default;
};

/// Name plus pressure level in hPa, or one of the surface/constant tags.
struct VariableId {
  std::string name;
  int level = kSurfaceLevel;

  std::string to_string() const {
    if (level == kSurfaceLevel) return name + "@sfc";
    if (level == kConstantLevel) return name + "@const";
    return name + "@" + std::to_string(level);
  }

  /// Parses "z@500", "tisr@sfc", "lsm@const"; a bare name means surface.
  static VariableId parse(const std::string& text) {
    const auto at = text.find('@');
    if (at == std::string::npos) {
      detail::require(!text.empty(), "empty variable name");
      return {text, kSurfaceLevel};
    }
    VariableId id{text.substr(0, at), kSurfaceLevel};
    const std::string lvl = text.substr(at + 1);
    detail::require(!id.name.empty(), "empty variable name in '" + text + "'");
    if (lvl == "sfc" || lvl == "surface") {
      id.level = kSurfaceLevel;
    } else if (lvl == "const" || lvl == "constant") {
      id.level = kConstantLevel;
    } else {
      std::size_t used = 0;
      try {
        id.level = std::stoi(lvl, &used);
      } catch (...) {
        used = 0;
      }
      detail::require(used == lvl.size() && id.level > 0, "bad level in variable '" + text + "'");
    }
    return id;
  }

  auto operator<=>(const VariableId&) const = default;
};

/// One 2-D field on a grid, row-major [lat][lon].
struct Field {
  VariableId variable;
  std::size_t n_lat = 0;
  std::size_t n_lon = 0;
  std::vector<double> values;

  Field() = default;
  Field(VariableId var, std::size_t nlat, std::size_t nlon, double fill = 0.0)
      : variable(std::move(var)), n_lat(nlat), n_lon(nlon), values(nlat * nlon, fill) {}

  double& at(std::size_t j, std::size_t k) { return values[j * n_lon + k]; }
  double at(std::size_t j, std::size_t k) const { return values[j * n_lon + k]; }
  bool same_shape(const Field& other) const { return n_lat == other.n_lat && n_lon == other.n_lon; }
};

/// Half-open range of time indices [begin, end).
struct TimeRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end > begin ? end - begin : 0; }
  bool empty() const { return size() == 0; }
  bool contains(std::size_t t) const { return t >= begin && t < end; }
  bool operator==(const TimeRange&) const = default;
};

struct SplitFractions {
  double train = 0.6;
  double neural_validation = 0.1;
  double stacked_validation = 0.15;
  double test = 0.15;
};

/// Chronological partition of the timeline: train, then the validation set
/// driving early stopping, then the stacked-model training set, then test.
struct SplitPlan {
  TimeRange train;
  TimeRange neural_validation;
  TimeRange stacked_validation;
  TimeRange test;

  static SplitPlan chronological(std::size_t n_time, const SplitFractions& f = {}) {
    const double parts[4] = {f.train, f.neural_validation, f.stacked_validation, f.test};
    double total = 0.0;
    for (double p : parts) {
      detail::require(p >= 0.0 && std::isfinite(p), "split fractions must be non-negative");
      total += p;
    }
    detail::require(total > 0.0, "split fractions must not all be zero");
    SplitPlan plan;
    TimeRange* ranges[4] = {&plan.train, &plan.neural_validation, &plan.stacked_validation, &plan.test};
    double acc = 0.0;
    std::size_t prev = 0;
    for (int i = 0; i < 4; ++i) {
      acc += parts[i];
      const std::size_t end =
          i == 3 ? n_time : static_cast<std::size_t>(std::llround(acc / total * static_cast<double>(n_time)));
      *ranges[i] = TimeRange{prev, std::max(prev, end)};
      prev = ranges[i]->end;
    }
    plan.validate(n_time);
    return plan;
  }

  void validate(std::size_t n_time) const {
    const TimeRange* r[4] = {&train, &neural_validation, &stacked_validation, &test};
    for (int i = 0; i < 4; ++i) {
      detail::require(r[i]->end <= n_time, "split range exceeds the dataset");
      if (i > 0) detail::require(r[i]->begin >= r[i - 1]->end, "split ranges must be disjoint and chronological");
    }
  }
};

/// Time-indexed multi-variable fields, stored as float [time][var][lat][lon].
class Dataset {
 public:
  Dataset() = default;
  Dataset(GridSpec grid, std::int64_t start_hours, std::uint32_t step_hours, std::vector<VariableId> variables,
          std::size_t n_time, std::vector<float> data)
      : grid_(std::move(grid)),
        start_hours_(start_hours),
        step_hours_(step_hours),
        variables_(std::move(variables)),
        n_time_(n_time),
        data_(std::move(data)) {
    grid_.validate();
    detail::require(step_hours_ >= 1, "time step must be at least one hour");
    detail::require(!variables_.empty(), "dataset needs at least one variable");
    detail::require(data_.size() == n_time_ * variables_.size() * grid_.size(),
                    "dataset payload size does not match its shape");
  }

  const GridSpec& grid() const { return grid_; }
  std::int64_t start_hours() const { return start_hours_; }
  std::uint32_t step_hours() const { return step_hours_; }
  const std::vector<VariableId>& variables() const { return variables_; }
  std::size_t n_time() const { return n_time_; }
  std::size_t n_var() const { return variables_.size(); }
  std::span<const float> raw() const { return data_; }
  std::int64_t time_hours(std::size_t t) const { return start_hours_ + static_cast<std::int64_t>(t) * step_hours_; }
  TimeRange all_times() const { return {0, n_time_}; }

  bool has(const VariableId& id) const {
    return std::find(variables_.begin(), variables_.end(), id) != variables_.end();
  }

  std::size_t index_of(const VariableId& id) const {
    const auto it = std::find(variables_.begin(), variables_.end(), id);
    detail::require(it != variables_.end(), "variable " + id.to_string() + " not in dataset");
    return static_cast<std::size_t>(it - variables_.begin());
  }

  std::span<const float> slice(std::size_t t, std::size_t v) const {
    return std::span<const float>(data_).subspan((t * n_var() + v) * grid_.size(), grid_.size());
  }

  float at(std::size_t t, std::size_t v, std::size_t j, std::size_t k) const {
    return data_[((t * n_var() + v) * grid_.n_lat() + j) * grid_.n_lon() + k];
  }

  Field field(std::size_t t, std::size_t v) const {
    detail::require(t < n_time_ && v < n_var(), "field index out of range");
    Field f(variables_[v], grid_.n_lat(), grid_.n_lon());
    const auto s = slice(t, v);
    std::copy(s.begin(), s.end(), f.values.begin());
    return f;
  }

  Field field(std::size_t t, const VariableId& id) const { return field(t, index_of(id)); }

  std::vector<Field> fields(const VariableId& id, TimeRange range) const {
    detail::require(range.end <= n_time_, "time range exceeds dataset");
    const std::size_t v = index_of(id);
    std::vector<Field> out;
    out.reserve(range.size());
    for (std::size_t t = range.begin; t < range.end; ++t) out.push_back(field(t, v));
    return out;
  }

  /// Throws NumericError naming the first non-finite entry.
  void validate() const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i])) {
        const std::size_t pts = grid_.size();
        const std::size_t t = i / (n_var() * pts);
        const std::size_t v = (i / pts) % n_var();
        const std::size_t j = (i % pts) / grid_.n_lon();
        const std::size_t k = i % grid_.n_lon();
        throw NumericError("non-finite value at index " + std::to_string(i) + " (time " + std::to_string(t) +
                           ", variable " + variables_[v].to_string() + ", lat " + std::to_string(j) + ", lon " +
                           std::to_string(k) + ")");
      }
    }
  }

  std::pair<double, double> min_max(std::size_t v, TimeRange range) const {
    detail::require(!range.empty() && range.end <= n_time_, "min/max needs a non-empty range");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t t = range.begin; t < range.end; ++t)
      for (float x : slice(t, v)) {
        lo = std::min(lo, static_cast<double>(x));
        hi = std::max(hi, static_cast<double>(x));
      }
    return {lo, hi};
  }

  /// Copy with one extra variable; `values` is [time][lat][lon].
  Dataset with_variable(const VariableId& id, std::span<const float> values) const {
    detail::require(!has(id), "variable " + id.to_string() + " already present");
    detail::require(values.size() == n_time_ * grid_.size(), "appended variable has the wrong size");
    std::vector<VariableId> vars = variables_;
    vars.push_back(id);
    const std::size_t pts = grid_.size();
    std::vector<float> data;
    data.reserve(data_.size() + values.size());
    for (std::size_t t = 0; t < n_time_; ++t) {
      const auto block = std::span<const float>(data_).subspan(t * n_var() * pts, n_var() * pts);
      data.insert(data.end(), block.begin(), block.end());
      const auto extra = values.subspan(t * pts, pts);
      data.insert(data.end(), extra.begin(), extra.end());
    }
    return Dataset(grid_, start_hours_, step_hours_, std::move(vars), n_time_, std::move(data));
  }

  bool operator==(const Dataset&) const = default;

 private:
  GridSpec grid_;
  std::int64_t start_hours_ = 0;
  std::uint32_t step_hours_ = 6;
  std::vector<VariableId> variables_;
  std::size_t n_time_ = 0;
  std::vector<float> data_;
};

/// L(j) = cos(lat_j) / mean(cos(lat)).
inline std::vector<double> latitude_weights(const GridSpec& grid) {
  grid.validate();
  std::vector<double> w(grid.n_lat());
  double mean = 0.0;
  for (std::size_t j = 0; j < grid.n_lat(); ++j) {
    w[j] = std::cos(grid.latitudes_deg[j] * std::numbers::pi / 180.0);
    // cos(±90°) evaluates to ~6e-17, not zero
    if (std::abs(grid.latitudes_deg[j]) == 90.0) w[j] = 0.0;
    mean += w[j];
  }
  mean /= static_cast<double>(grid.n_lat());
  if (!(mean > 0.0)) throw InvalidArgument("degenerate grid: mean cos(latitude) is zero");
  for (double& x : w) x /= mean;
  return w;
}

/// Lead time in hours converted to whole time steps.
inline std::size_t lead_steps(const Dataset& ds, std::int64_t lead_hours) {
  detail::require(lead_hours >= 0, "lead time must be non-negative");
  detail::require(lead_hours % ds.step_hours() == 0,
                  "lead of " + std::to_string(lead_hours) + " h is not a multiple of the " +
                      std::to_string(ds.step_hours()) + " h time step");
  const auto steps = static_cast<std::size_t>(lead_hours / ds.step_hours());
  detail::require(steps < ds.n_time(), "lead time exceeds the dataset span");
  return steps;
}

/// Per-gridpoint temporal mean of one variable over a time range.
inline Field climatology(const Dataset& ds, const VariableId& var, TimeRange range) {
  detail::require(!range.empty(), "climatology needs a non-empty time range");
  detail::require(range.end <= ds.n_time(), "climatology range exceeds dataset");
  const std::size_t v = ds.index_of(var);
  Field out(var, ds.grid().n_lat(), ds.grid().n_lon());
  for (std::size_t t = range.begin; t < range.end; ++t) {
    const auto s = ds.slice(t, v);
    for (std::size_t i = 0; i < s.size(); ++i) out.values[i] += s[i];
  }
  for (double& x : out.values) x /= static_cast<double>(range.size());
  return out;
}

/// Persistence forecasts for the valid times in `valid`: the forecast valid
/// at t is the observation at t - lead. Valid times before the lead are an
/// error.
inline std::vector<Field> persistence_forecast(const Dataset& ds, const VariableId& var, std::int64_t lead_hours,
                                               TimeRange valid) {
  const std::size_t lead = lead_steps(ds, lead_hours);
  detail::require(valid.end <= ds.n_time(), "valid-time range exceeds dataset");
  detail::require(valid.begin >= lead, "persistence needs observations one lead time before the first valid time");
  const std::size_t v = ds.index_of(var);
  std::vector<Field> out;
  out.reserve(valid.size());
  for (std::size_t t = valid.begin; t < valid.end; ++t) out.push_back(ds.field(t - lead, v));
  return out;
}

inline Field anomaly(const Field& field, const Field& clim) {
  detail::require(field.same_shape(clim), "anomaly: grid mismatch");
  Field out = field;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= clim.values[i];
  return out;
}

}  // namespace probcast
