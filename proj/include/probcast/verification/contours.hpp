#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "probcast/grid.hpp"

namespace probcast {

struct ContourVertex {
  double lat = 0.0;
  double lon = 0.0;
};

struct Polyline {
  double level = 0.0;
  std::vector<ContourVertex> vertices;
  /// Closed loops repeat their first vertex at the end.
  bool closed = false;
};

namespace detail {

/// Marching-squares crossing on the edge from value a to value b.
inline bool crosses(double a, double b, double level) { return (a < level) != (b < level); }

}  // namespace detail

/// Isolines of a field at each level. Longitude is periodic; crossings use
/// the strict rule (a < L) != (b < L) with linear interpolation along the
/// edge; saddle cells are resolved by the mean of the four corners.
/// Longitudes are reported in [lon_0, lon_0 + 360).
inline std::vector<Polyline> probability_contours(const Field& f, const GridSpec& grid,
                                                  const std::vector<double>& levels = {0.10, 0.50, 0.90}) {
  detail::require(f.n_lat == grid.n_lat() && f.n_lon == grid.n_lon(), "field does not match the grid");
  const std::size_t nl = f.n_lat, nk = f.n_lon;
  const double lon_period = 360.0;
  std::vector<Polyline> out;
  if (nl < 2 || nk < 2) return out;

  // Edge ids: horizontal (j, k)-(j, k+1) -> j * nk + k; vertical
  // (j, k)-(j+1, k) -> nl * nk + j * nk + k.
  auto h_id = [&](std::size_t j, std::size_t k) { return j * nk + k; };
  auto v_id = [&](std::size_t j, std::size_t k) { return nl * nk + j * nk + k; };
  const double lon0 = grid.longitudes_deg.front();

  for (double level : levels) {
    detail::require(level > 0.0 && level < 1.0, "contour levels must lie in (0, 1)");
    auto vertex_of = [&](std::size_t id) {
      ContourVertex v;
      if (id < nl * nk) {
        const std::size_t j = id / nk, k = id % nk, k1 = (k + 1) % nk;
        const double a = f.at(j, k), b = f.at(j, k1);
        const double t = (level - a) / (b - a);
        const double la = grid.longitudes_deg[k];
        const double lb = k1 == 0 ? grid.longitudes_deg[0] + lon_period : grid.longitudes_deg[k1];
        v.lat = grid.latitudes_deg[j];
        v.lon = la + t * (lb - la);
      } else {
        const std::size_t r = id - nl * nk, j = r / nk, k = r % nk;
        const double a = f.at(j, k), b = f.at(j + 1, k);
        const double t = (level - a) / (b - a);
        v.lat = grid.latitudes_deg[j] + t * (grid.latitudes_deg[j + 1] - grid.latitudes_deg[j]);
        v.lon = grid.longitudes_deg[k];
      }
      if (v.lon >= lon0 + lon_period) v.lon -= lon_period;
      return v;
    };

    std::map<std::size_t, std::vector<std::size_t>> adj;
    auto link = [&](std::size_t a, std::size_t b) {
      adj[a].push_back(b);
      adj[b].push_back(a);
    };
    for (std::size_t j = 0; j + 1 < nl; ++j)
      for (std::size_t k = 0; k < nk; ++k) {
        const std::size_t k1 = (k + 1) % nk;
        const double v00 = f.at(j, k), v01 = f.at(j, k1), v11 = f.at(j + 1, k1), v10 = f.at(j + 1, k);
        const std::size_t bottom = h_id(j, k), right = v_id(j, k1), top = h_id(j + 1, k), left = v_id(j, k);
        std::vector<std::size_t> hits;
        if (detail::crosses(v00, v01, level)) hits.push_back(bottom);
        if (detail::crosses(v01, v11, level)) hits.push_back(right);
        if (detail::crosses(v11, v10, level)) hits.push_back(top);
        if (detail::crosses(v10, v00, level)) hits.push_back(left);
        if (hits.size() == 2) {
          link(hits[0], hits[1]);
        } else if (hits.size() == 4) {
          const double centre = 0.25 * (v00 + v01 + v11 + v10);
          if ((centre < level) == (v00 < level)) {
            link(bottom, right);
            link(top, left);
          } else {
            link(bottom, left);
            link(right, top);
          }
        }
      }

    std::map<std::size_t, std::size_t> visits;
    auto walk = [&](std::size_t start) {
      Polyline pl;
      pl.level = level;
      std::size_t prev = static_cast<std::size_t>(-1), cur = start;
      while (true) {
        pl.vertices.push_back(vertex_of(cur));
        ++visits[cur];
        std::size_t next = static_cast<std::size_t>(-1);
        for (std::size_t n : adj[cur])
          if (n != prev && visits[n] == 0) {
            next = n;
            break;
          }
        if (next == static_cast<std::size_t>(-1)) {
          // closed when the start is adjacent and we have gone around
          const auto& a = adj[cur];
          if (pl.vertices.size() > 2 && std::find(a.begin(), a.end(), start) != a.end()) {
            pl.vertices.push_back(pl.vertices.front());
            pl.closed = true;
          }
          break;
        }
        prev = cur;
        cur = next;
      }
      out.push_back(std::move(pl));
    };
    for (const auto& [id, nbrs] : adj)
      if (nbrs.size() == 1 && visits[id] == 0) walk(id);
    for (const auto& [id, nbrs] : adj)
      if (visits[id] == 0) walk(id);
  }
  return out;
}

/// level,polyline,vertex,lat,lon
inline std::string contours_to_csv(const std::vector<Polyline>& lines) {
  std::string out = "level,polyline,vertex,lat,lon\n";
  char buf[128];
  for (std::size_t i = 0; i < lines.size(); ++i)
    for (std::size_t v = 0; v < lines[i].vertices.size(); ++v) {
      std::snprintf(buf, sizeof buf, "%.4g,%zu,%zu,%.10g,%.10g\n", lines[i].level, i, v, lines[i].vertices[v].lat,
                    lines[i].vertices[v].lon);
      out += buf;
    }
  return out;
}

/// Equirectangular SVG of the contours; `background` (optional) is drawn as
/// grey cells scaled over [0, 1].
inline std::string contours_to_svg(const std::vector<Polyline>& lines, const GridSpec& grid,
                                   const Field* background = nullptr, double px_per_deg = 2.0) {
  const double w = 360.0 * px_per_deg, h = 180.0 * px_per_deg;
  const double lon0 = grid.longitudes_deg.front();
  auto x_of = [&](double lon) { return (lon - lon0) * px_per_deg; };
  auto y_of = [&](double lat) { return (90.0 - lat) * px_per_deg; };
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                w, h, w, h);
  out += buf;
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (background && grid.n_lat() >= 1 && grid.n_lon() >= 1) {
    const double cw = w / static_cast<double>(grid.n_lon()), ch = h / static_cast<double>(grid.n_lat());
    for (std::size_t j = 0; j < grid.n_lat(); ++j)
      for (std::size_t k = 0; k < grid.n_lon(); ++k) {
        const int g = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(background->at(j, k), 0.0, 1.0))));
        const double cy = y_of(grid.latitudes_deg[j]) - ch / 2.0, cx = x_of(grid.longitudes_deg[k]) - cw / 2.0;
        std::snprintf(buf, sizeof buf, "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"rgb(%d,%d,%d)\"/>\n",
                      cx, cy, cw, ch, g, g, 255);
        out += buf;
      }
  }
  const char* colours[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e"};
  std::map<double, std::size_t> level_index;
  for (const auto& pl : lines) level_index.emplace(pl.level, level_index.size());
  for (const auto& pl : lines) {
    const char* colour = colours[level_index[pl.level] % 5];
    // split where the line wraps across the date line
    std::string pts;
    auto flush = [&] {
      if (!pts.empty()) {
        out += "<polyline fill=\"none\" stroke=\"" + std::string(colour) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        pts.clear();
      }
    };
    for (std::size_t i = 0; i < pl.vertices.size(); ++i) {
      if (i > 0 && std::abs(pl.vertices[i].lon - pl.vertices[i - 1].lon) > 180.0) flush();
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x_of(pl.vertices[i].lon), y_of(pl.vertices[i].lat));
      pts += buf;
    }
    flush();
  }
  out += "</svg>\n";
  return out;
}

}  // namespace probcast
