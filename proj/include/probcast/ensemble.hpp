#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "probcast/binning.hpp"
#include "probcast/core/parallel.hpp"
#include "probcast/core/random.hpp"
#include "probcast/model/training.hpp"

namespace probcast {

/// Dropout-at-inference members of one forecast.
struct EnsembleSet {
  std::vector<DensityGrid> members;
  std::vector<std::uint64_t> streams;

  std::vector<Field> member_expectations() const {
    std::vector<Field> out;
    out.reserve(members.size());
    for (const auto& m : members) out.push_back(expectation(m));
    return out;
  }
};

namespace detail {

template <class T>
void require_dropout(const ResNet<T>& model) {
  if (!model.categorical()) throw ModeError("ensembles need a categorical model");
  if (!model.has_dropout())
    throw InvalidArgument("cannot build a dropout ensemble: no dropout layer in the network architecture");
}

}  // namespace detail

/// n stochastic passes for the sample with inputs at time t; member k uses
/// stream k of master_seed. Normalization layers stay in inference mode.
template <class T>
EnsembleSet generate_ensemble(ResNet<T>& model, const Dataset& ds, std::size_t t, std::size_t n_members,
                              std::uint64_t master_seed) {
  detail::require_dropout(model);
  detail::require(n_members >= 1, "an ensemble needs at least one member");
  EnsembleSet set;
  set.members.resize(n_members);
  set.streams.resize(n_members);
  const std::size_t times[1] = {t};
  parallel_for(n_members, [&](std::size_t k) {
    Rng rng = make_rng(master_seed, k);
    set.members[k] = std::move(predict_density(model, ds, times, true, &rng).front());
    set.streams[k] = k;
  });
  return set;
}

/// p(i) = sum_k w_k p_k(i). Empty weights mean uniform.
inline DensityGrid linear_pool(const std::vector<DensityGrid>& members, std::span<const double> weights = {}) {
  detail::require(!members.empty(), "pooling needs at least one member");
  std::vector<double> w(weights.begin(), weights.end());
  if (w.empty()) w.assign(members.size(), 1.0 / static_cast<double>(members.size()));
  detail::require(w.size() == members.size(), "one weight per member is required");
  double total = 0.0;
  for (double x : w) {
    detail::require(x >= 0.0 && std::isfinite(x), "pooling weights must be non-negative");
    total += x;
  }
  detail::require(std::abs(total - 1.0) <= 1e-9, "pooling weights must sum to 1");
  const DensityGrid& first = members.front();
  for (const auto& m : members)
    detail::require(m.spec == first.spec && m.n_lat == first.n_lat && m.n_lon == first.n_lon,
                    "ensemble members differ in bin spec or grid");
  DensityGrid out(first.spec, first.n_lat, first.n_lon);
  for (std::size_t k = 0; k < members.size(); ++k)
    for (std::size_t i = 0; i < out.probs.size(); ++i) out.probs[i] += w[k] * members[k].probs[i];
  return out;
}

inline DensityGrid linear_pool(const EnsembleSet& set, std::span<const double> weights = {}) {
  return linear_pool(set.members, weights);
}

struct Spread {
  Field spread;
  double scalar = 0.0;
};

/// sqrt( mean_{j,k} L(j) var ) over one or more per-time variance fields.
inline double spread_scalar(const std::vector<Field>& variance, const GridSpec& grid) {
  detail::require(!variance.empty(), "spread needs at least one time point");
  const auto w = latitude_weights(grid);
  double total = 0.0;
  for (const auto& v : variance) {
    detail::require(v.n_lat == grid.n_lat() && v.n_lon == grid.n_lon(), "variance field does not match the grid");
    double s = 0.0;
    for (std::size_t j = 0; j < v.n_lat; ++j)
      for (std::size_t k = 0; k < v.n_lon; ++k) s += w[j] * v.at(j, k);
    total += s / static_cast<double>(grid.size());
  }
  return std::sqrt(total / static_cast<double>(variance.size()));
}

/// Population standard deviation of member expectations per gridpoint.
inline Spread ensemble_spread(const EnsembleSet& set, const GridSpec& grid) {
  detail::require(set.members.size() >= 2, "spread needs at least two members");
  const auto ex = set.member_expectations();
  const double n = static_cast<double>(ex.size());
  Field var(ex.front().variable, ex.front().n_lat, ex.front().n_lon);
  for (std::size_t p = 0; p < var.values.size(); ++p) {
    double mu = 0.0;
    for (const auto& e : ex) mu += e.values[p];
    mu /= n;
    double s = 0.0;
    for (const auto& e : ex) s += (e.values[p] - mu) * (e.values[p] - mu);
    var.values[p] = s / n;
  }
  Spread out;
  out.scalar = spread_scalar({var}, grid);
  out.spread = var;
  for (double& x : out.spread.values) x = std::sqrt(x);
  return out;
}

inline double spread_skill_ratio(double spread, double rmse) {
  detail::require(rmse > 0.0, "spread/skill ratio needs a positive RMSE");
  return spread / rmse;
}

/// Pooled densities of many samples built member by member, without holding
/// every member in memory.
struct PooledForecast {
  std::vector<std::size_t> times;
  std::size_t lead = 0;
  std::vector<DensityGrid> pooled;
  /// Population variance of member expectations per sample.
  std::vector<Field> expectation_variance;
  /// Expectation of member 0 alone.
  std::vector<Field> single_member;
  std::size_t n_members = 0;
  std::uint64_t master_seed = 0;

  std::vector<Field> pooled_expectations() const {
    std::vector<Field> out;
    out.reserve(pooled.size());
    for (const auto& d : pooled) out.push_back(expectation(d));
    return out;
  }
};

/// Members are evaluated in groups of `workers`; accumulation follows the
/// member index so the result does not depend on the worker count.
template <class T>
PooledForecast pooled_forecast(ResNet<T>& model, const Dataset& ds, std::span<const std::size_t> times,
                               std::size_t n_members, std::uint64_t master_seed, std::size_t workers = thread_budget()) {
  detail::require_dropout(model);
  detail::require(n_members >= 1, "an ensemble needs at least one member");
  detail::require(!times.empty(), "no samples to forecast");
  PooledForecast pf;
  pf.times.assign(times.begin(), times.end());
  pf.lead = lead_steps(ds, model.config.lead_hours);
  pf.n_members = n_members;
  pf.master_seed = master_seed;
  const std::size_t ns = times.size(), nl = ds.grid().n_lat(), nk = ds.grid().n_lon();
  pf.pooled.assign(ns, DensityGrid(*model.bins, nl, nk));
  std::vector<Field> mean(ns, Field(model.config.target, nl, nk));
  pf.expectation_variance.assign(ns, Field(model.config.target, nl, nk));
  workers = std::max<std::size_t>(1, std::min(workers, n_members));
  const double inv_n = 1.0 / static_cast<double>(n_members);
  for (std::size_t k0 = 0; k0 < n_members; k0 += workers) {
    const std::size_t group = std::min(workers, n_members - k0);
    std::vector<std::vector<DensityGrid>> out(group);
    parallel_for(
        group,
        [&](std::size_t g) {
          Rng rng = make_rng(master_seed, k0 + g);
          out[g] = predict_density(model, ds, times, true, &rng);
        },
        group);
    for (std::size_t g = 0; g < group; ++g) {
      const double count = static_cast<double>(k0 + g + 1);
      for (std::size_t s = 0; s < ns; ++s) {
        auto& acc = pf.pooled[s].probs;
        const auto& src = out[g][s].probs;
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += inv_n * src[i];
        const Field e = expectation(out[g][s], model.config.target);
        if (k0 + g == 0) pf.single_member.push_back(e);
        // Welford update of mean and summed squared deviation
        for (std::size_t p = 0; p < e.values.size(); ++p) {
          const double d = e.values[p] - mean[s].values[p];
          mean[s].values[p] += d / count;
          pf.expectation_variance[s].values[p] += d * (e.values[p] - mean[s].values[p]);
        }
      }
    }
  }
  for (auto& v : pf.expectation_variance)
    for (double& x : v.values) x *= inv_n;
  return pf;
}

}  // namespace probcast
