#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include "probcast/core/error.hpp"
#include "probcast/core/random.hpp"
#include "probcast/grid.hpp"

namespace probcast {

/// Parameters of the toy atmosphere. Two latent streamfunction-like fields
/// (a fast one and a slower one) evolve as rotating AR(1) processes in a
/// truncated spectral basis; every emitted variable is a level-dependent
/// mixture of them plus mean structure, a seasonal cycle and noise.
struct SynthConfig {
  std::size_t n_lat = 32;
  std::size_t n_lon = 64;
  std::size_t n_steps = 2000;
  std::uint32_t step_hours = 6;
  std::int64_t start_hours = 0;

  /// Scales every spatial/temporal variation; 0 yields constant fields.
  double amplitude = 1.0;
  /// Per-step AR(1) coefficient of each latent spectral mode.
  double persistence = 0.99;
  /// Eastward drift of the fast latent pattern in degrees per step.
  double drift_deg_per_step = 3.0;
  std::size_t max_wavenumber = 4;
  std::size_t meridional_modes = 3;
  /// Independent per-level noise, relative to each variable's anomaly scale.
  double noise = 0.05;

  std::vector<int> levels{250, 500, 700, 850, 1000};
  bool geopotential = true;
  bool temperature = true;
  bool humidity = true;
  bool wind = true;
  bool solar = true;
  bool surface_temperature = true;
  bool constants = true;
  bool noise_variable = true;
};

namespace detail {

class LatentField {
 public:
  LatentField(std::size_t max_m, std::size_t n_modes, double drift_rad, double rho, Rng& rng)
      : max_m_(max_m), n_modes_(n_modes), drift_(drift_rad), rho_(rho) {
    coeff_.resize(max_m_ * n_modes_);
    sigma_.resize(coeff_.size());
    for (std::size_t m = 1; m <= max_m_; ++m)
      for (std::size_t n = 1; n <= n_modes_; ++n) sigma_[idx(m, n)] = 1.0 / static_cast<double>(m + n);
    for (std::size_t i = 0; i < coeff_.size(); ++i) coeff_[i] = draw(rng, sigma_[i]);
  }

  void step(Rng& rng) {
    const double innov = std::sqrt(std::max(0.0, 1.0 - rho_ * rho_));
    for (std::size_t m = 1; m <= max_m_; ++m) {
      const std::complex<double> rot = std::polar(1.0, -static_cast<double>(m) * drift_);
      for (std::size_t n = 1; n <= n_modes_; ++n) {
        auto& c = coeff_[idx(m, n)];
        c = rho_ * rot * c + innov * draw(rng, sigma_[idx(m, n)]);
      }
    }
  }

  /// Evaluates sum_mn Re(c_mn e^{i m (lon - shift)}) B_n(lat) on the grid,
  /// where B_n is sin(n pi s) (or its s-derivative when `derivative`).
  void evaluate(const GridSpec& grid, double shift_rad, bool derivative, std::vector<double>& out) const {
    const std::size_t nl = grid.n_lat(), nk = grid.n_lon();
    out.assign(nl * nk, 0.0);
    std::vector<double> zonal(nk);
    for (std::size_t m = 1; m <= max_m_; ++m) {
      for (std::size_t n = 1; n <= n_modes_; ++n) {
        const auto c = coeff_[idx(m, n)];
        for (std::size_t k = 0; k < nk; ++k) {
          const double phase = static_cast<double>(m) * (grid.longitudes_deg[k] * std::numbers::pi / 180.0 - shift_rad);
          zonal[k] = c.real() * std::cos(phase) - c.imag() * std::sin(phase);
        }
        for (std::size_t j = 0; j < nl; ++j) {
          const double s = (grid.latitudes_deg[j] + 90.0) / 180.0;
          const double arg = static_cast<double>(n) * std::numbers::pi * s;
          const double b = derivative ? std::cos(arg) : std::sin(arg);
          double* row = out.data() + j * nk;
          for (std::size_t k = 0; k < nk; ++k) row[k] += b * zonal[k];
        }
      }
    }
  }

  /// Grid-mean pointwise variance of evaluate() under the stationary law.
  double mean_variance(const GridSpec& grid, bool derivative) const {
    double total = 0.0;
    for (std::size_t j = 0; j < grid.n_lat(); ++j) {
      const double s = (grid.latitudes_deg[j] + 90.0) / 180.0;
      for (std::size_t m = 1; m <= max_m_; ++m)
        for (std::size_t n = 1; n <= n_modes_; ++n) {
          const double arg = static_cast<double>(n) * std::numbers::pi * s;
          const double b = derivative ? std::cos(arg) : std::sin(arg);
          total += 0.5 * sigma_[idx(m, n)] * sigma_[idx(m, n)] * b * b;
        }
    }
    return total / static_cast<double>(grid.n_lat());
  }

 private:
  std::size_t idx(std::size_t m, std::size_t n) const { return (m - 1) * n_modes_ + (n - 1); }

  static double clipped_normal(Rng& rng) { return std::clamp(standard_normal(rng), -4.0, 4.0); }

  static std::complex<double> draw(Rng& rng, double sigma) {
    const double s = sigma / std::numbers::sqrt2;
    const double re = clipped_normal(rng);
    const double im = clipped_normal(rng);
    return {s * re, s * im};
  }

  std::size_t max_m_, n_modes_;
  double drift_, rho_;
  std::vector<std::complex<double>> coeff_;
  std::vector<double> sigma_;
};

inline double geopotential_height_m(int level_hpa) { return 7000.0 * std::log(1000.0 / level_hpa); }

}  // namespace detail

/// Deterministic toy atmosphere. Variables (when enabled): z, t, q, u at
/// every configured level; tisr, t2m and noise at the surface; orography,
/// lsm and lat as constants.
inline Dataset synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
  detail::require(cfg.n_lat >= 1 && cfg.n_lon >= 1, "synthetic grid must be non-empty");
  detail::require(cfg.n_steps >= 1, "synthetic dataset needs at least one time step");
  detail::require(cfg.step_hours >= 1, "time step must be at least one hour");
  detail::require(cfg.max_wavenumber >= 1 && cfg.meridional_modes >= 1, "need at least one latent mode");
  detail::require(cfg.persistence >= 0.0 && cfg.persistence < 1.0, "persistence must lie in [0, 1)");
  for (int l : cfg.levels) detail::require(l > 0 && l <= 1100, "pressure levels must lie in (0, 1100] hPa");

  const GridSpec grid = GridSpec::regular(cfg.n_lat, cfg.n_lon);
  const std::size_t nl = grid.n_lat(), nk = grid.n_lon(), pts = grid.size();
  const double deg = std::numbers::pi / 180.0;
  const double amp = cfg.amplitude;

  std::vector<VariableId> vars;
  auto add_levels = [&](bool on, const char* name) {
    if (on)
      for (int l : cfg.levels) vars.push_back({name, l});
  };
  add_levels(cfg.geopotential, "z");
  add_levels(cfg.temperature, "t");
  add_levels(cfg.humidity, "q");
  add_levels(cfg.wind, "u");
  if (cfg.solar) vars.push_back({"tisr", kSurfaceLevel});
  if (cfg.surface_temperature) vars.push_back({"t2m", kSurfaceLevel});
  if (cfg.noise_variable) vars.push_back({"noise", kSurfaceLevel});
  if (cfg.constants) {
    vars.push_back({"orography", kConstantLevel});
    vars.push_back({"lsm", kConstantLevel});
    vars.push_back({"lat", kConstantLevel});
  }
  detail::require(!vars.empty(), "synthetic config enables no variables");

  Rng latent_rng = make_rng(seed, 1);
  Rng noise_rng = make_rng(seed, 2);
  Rng terrain_rng = make_rng(seed, 3);

  detail::LatentField fast(cfg.max_wavenumber, cfg.meridional_modes, cfg.drift_deg_per_step * deg, cfg.persistence,
                           latent_rng);
  detail::LatentField slow(cfg.max_wavenumber, cfg.meridional_modes, 0.6 * cfg.drift_deg_per_step * deg,
                           cfg.persistence, latent_rng);
  const double fast_norm = 1.0 / std::sqrt(fast.mean_variance(grid, false));
  const double slow_norm = 1.0 / std::sqrt(slow.mean_variance(grid, false));
  const double shear_norm = 1.0 / std::sqrt(fast.mean_variance(grid, true));

  std::vector<double> cos_lat(nl), sin_lat(nl);
  for (std::size_t j = 0; j < nl; ++j) {
    cos_lat[j] = std::cos(grid.latitudes_deg[j] * deg);
    sin_lat[j] = std::sin(grid.latitudes_deg[j] * deg);
  }
  constexpr double kMeanCos = 2.0 / std::numbers::pi;

  // Orography: one frozen draw of a smooth latent field.
  std::vector<double> terrain;
  {
    detail::LatentField relief(cfg.max_wavenumber + 2, cfg.meridional_modes + 2, 0.0, 0.0, terrain_rng);
    relief.evaluate(grid, 0.0, false, terrain);
    const double norm = 1.0 / std::sqrt(relief.mean_variance(grid, false));
    for (double& x : terrain) x *= norm;
  }

  const std::size_t nv = vars.size();
  std::vector<float> data(cfg.n_steps * nv * pts);
  std::vector<double> psi, chi, shear;
  auto level_tilt = [](int level) { return 20.0 * (1000.0 - level) / 750.0; };

  for (std::size_t t = 0; t < cfg.n_steps; ++t) {
    if (t > 0) {
      fast.step(latent_rng);
      slow.step(latent_rng);
    }
    const double hours = static_cast<double>(cfg.start_hours) + static_cast<double>(t * cfg.step_hours);
    const double season = std::cos(2.0 * std::numbers::pi * hours / 8766.0);
    const double day_of_year = std::fmod(hours / 24.0, 365.25);
    const double declination = 23.44 * deg * std::sin(2.0 * std::numbers::pi * (day_of_year - 81.0) / 365.25);
    const double utc_hour = std::fmod(hours, 24.0);

    for (std::size_t v = 0; v < nv; ++v) {
      const VariableId& id = vars[v];
      float* out = data.data() + (t * nv + v) * pts;
      auto emit = [&](auto&& value_at) {
        for (std::size_t j = 0; j < nl; ++j)
          for (std::size_t k = 0; k < nk; ++k) out[j * nk + k] = static_cast<float>(value_at(j, k));
      };
      auto noise = [&] { return cfg.noise * std::clamp(standard_normal(noise_rng), -4.0, 4.0); };

      if (id.name == "z") {
        const double tilt = level_tilt(id.level) * deg;
        fast.evaluate(grid, tilt, false, psi);
        slow.evaluate(grid, tilt, false, chi);
        const double base = 9.80665 * detail::geopotential_height_m(id.level) + 1000.0;
        const double grad = 800.0 * (1.0 + (1000.0 - id.level) / 500.0);
        const double scale = 600.0 * (0.6 + 0.8 * (1000.0 - id.level) / 750.0);
        emit([&](std::size_t j, std::size_t k) {
          const double anom = 0.95 * fast_norm * psi[j * nk + k] + 0.31 * slow_norm * chi[j * nk + k];
          return base + amp * (grad * (cos_lat[j] - kMeanCos) + scale * (anom + noise()) +
                               250.0 * sin_lat[j] * season);
        });
      } else if (id.name == "t") {
        const double tilt = level_tilt(id.level) * deg;
        fast.evaluate(grid, tilt + 25.0 * deg, false, psi);
        slow.evaluate(grid, tilt, false, chi);
        const double base = 288.0 - 6.5 * detail::geopotential_height_m(id.level) / 1000.0;
        emit([&](std::size_t j, std::size_t k) {
          const double anom = 0.55 * fast_norm * psi[j * nk + k] + 0.835 * slow_norm * chi[j * nk + k];
          return base + amp * (6.0 * (cos_lat[j] - kMeanCos) + 3.0 * (anom + noise()) + 4.0 * sin_lat[j] * season);
        });
      } else if (id.name == "q") {
        const double tilt = level_tilt(id.level) * deg;
        fast.evaluate(grid, tilt, false, psi);
        slow.evaluate(grid, tilt, false, chi);
        const double q0 = 0.012 * std::exp(-(1000.0 - id.level) / 250.0);
        emit([&](std::size_t j, std::size_t k) {
          const double expo = 0.25 * slow_norm * chi[j * nk + k] + 0.1 * fast_norm * psi[j * nk + k] +
                              0.6 * (cos_lat[j] - kMeanCos) + 0.1 * noise();
          return q0 * std::exp(amp * expo);
        });
      } else if (id.name == "u") {
        const double tilt = level_tilt(id.level) * deg;
        fast.evaluate(grid, tilt, true, shear);
        const double jet = 10.0 + 20.0 * (1000.0 - id.level) / 750.0;
        emit([&](std::size_t j, std::size_t k) {
          const double s2 = std::sin(2.0 * grid.latitudes_deg[j] * deg);
          return amp * (jet * s2 * s2 - 8.0 * shear_norm * shear[j * nk + k] + 8.0 * noise());
        });
      } else if (id.name == "tisr") {
        emit([&](std::size_t j, std::size_t k) {
          const double hour_angle = (utc_hour + grid.longitudes_deg[k] / 15.0 - 12.0) * 15.0 * deg;
          const double cos_zenith = sin_lat[j] * std::sin(declination) +
                                    cos_lat[j] * std::cos(declination) * std::cos(hour_angle);
          return amp * 1361.0 * 21600.0 * std::max(0.0, cos_zenith);
        });
      } else if (id.name == "t2m") {
        fast.evaluate(grid, 25.0 * deg, false, psi);
        slow.evaluate(grid, 0.0, false, chi);
        emit([&](std::size_t j, std::size_t k) {
          const double anom = 0.55 * fast_norm * psi[j * nk + k] + 0.835 * slow_norm * chi[j * nk + k];
          const double hour_angle = (utc_hour + grid.longitudes_deg[k] / 15.0 - 12.0) * 15.0 * deg;
          return 288.0 + amp * (12.0 * (cos_lat[j] - kMeanCos) + 3.0 * anom + 5.0 * sin_lat[j] * season +
                                2.0 * cos_lat[j] * std::cos(hour_angle) + 3.0 * noise());
        });
      } else if (id.name == "noise") {
        emit([&](std::size_t, std::size_t) { return amp * std::clamp(standard_normal(noise_rng), -4.0, 4.0); });
      } else if (id.name == "orography") {
        emit([&](std::size_t j, std::size_t k) { return amp * 1500.0 * std::max(0.0, terrain[j * nk + k]); });
      } else if (id.name == "lsm") {
        emit([&](std::size_t j, std::size_t k) { return amp * (terrain[j * nk + k] > 0.0 ? 1.0 : 0.0); });
      } else if (id.name == "lat") {
        emit([&](std::size_t j, std::size_t) { return amp * grid.latitudes_deg[j]; });
      }
    }
  }
  return Dataset(grid, cfg.start_hours, cfg.step_hours, std::move(vars), cfg.n_steps, std::move(data));
}

}  // namespace probcast
