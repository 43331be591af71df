#pragma once

#include <cmath>
#include <vector>

#include "probcast/core/error.hpp"
#include "probcast/grid.hpp"

namespace probcast {

namespace detail {

inline void check_pairs(const std::vector<Field>& pred, const std::vector<Field>& truth, const GridSpec& grid) {
  require(!pred.empty(), "need at least one time point");
  require(pred.size() == truth.size(), "prediction/truth time count mismatch");
  for (std::size_t t = 0; t < pred.size(); ++t) {
    require(pred[t].same_shape(truth[t]), "prediction/truth shape mismatch");
    require(pred[t].n_lat == grid.n_lat() && pred[t].n_lon == grid.n_lon(), "field does not match the grid");
  }
}

}  // namespace detail

/// sqrt( mean_t mean_{j,k} L(j) (f - t)^2 ).
inline double weighted_rmse(const std::vector<Field>& pred, const std::vector<Field>& truth, const GridSpec& grid) {
  detail::check_pairs(pred, truth, grid);
  const auto w = latitude_weights(grid);
  const std::size_t nl = grid.n_lat(), nk = grid.n_lon();
  double total = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    double s = 0.0;
    for (std::size_t j = 0; j < nl; ++j) {
      double row = 0.0;
      for (std::size_t k = 0; k < nk; ++k) {
        const double e = pred[t].at(j, k) - truth[t].at(j, k);
        row += e * e;
      }
      s += w[j] * row;
    }
    total += s / static_cast<double>(nl * nk);
  }
  return std::sqrt(total / static_cast<double>(pred.size()));
}

struct MseInterval {
  double mse = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Mean of L(j)(f - t)^2 over all N points with mse +- 1.96 sqrt(Var/N),
/// population variance.
inline MseInterval weighted_mse_ci(const std::vector<Field>& pred, const std::vector<Field>& truth,
                                   const GridSpec& grid) {
  detail::check_pairs(pred, truth, grid);
  const auto w = latitude_weights(grid);
  const std::size_t nl = grid.n_lat(), nk = grid.n_lon();
  const double n = static_cast<double>(pred.size() * nl * nk);
  detail::require(n >= 2.0, "confidence interval needs at least two points");
  double sum = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t)
    for (std::size_t j = 0; j < nl; ++j)
      for (std::size_t k = 0; k < nk; ++k) {
        const double e = pred[t].at(j, k) - truth[t].at(j, k);
        sum += w[j] * e * e;
      }
  const double mean = sum / n;
  double var = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t)
    for (std::size_t j = 0; j < nl; ++j)
      for (std::size_t k = 0; k < nk; ++k) {
        const double e = pred[t].at(j, k) - truth[t].at(j, k);
        const double d = w[j] * e * e - mean;
        var += d * d;
      }
  var /= n;
  const double half = 1.96 * std::sqrt(var / n);
  return {mean, mean - half, mean + half};
}

}  // namespace probcast
