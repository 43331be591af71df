#pragma once

// GFB1 dataset container (little-endian):
//   "GFB1", u32 n_lat, n_lon, n_time, n_var,
//   f64 latitudes[n_lat], f64 longitudes[n_lon],
//   i64 epoch_hours_start, u32 step_hours,
//   n_var x (u16 name length, UTF-8 name, i32 level_hPa; -1 surface, -2 constant),
//   f32 payload [time][var][lat][lon].
// save_dataset also writes "<path>.json", a human-readable manifest.

#include <cmath>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "probcast/grid.hpp"
#include "probcast/io/bytes.hpp"

namespace probcast::io {

inline constexpr std::string_view kGfb1Magic = "GFB1";

inline std::filesystem::path manifest_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

inline nlohmann::ordered_json dataset_manifest(const Dataset& ds) {
  nlohmann::ordered_json j;
  j["format"] = "GFB1";
  j["n_lat"] = ds.grid().n_lat();
  j["n_lon"] = ds.grid().n_lon();
  j["n_time"] = ds.n_time();
  j["n_var"] = ds.n_var();
  j["latitudes"] = ds.grid().latitudes_deg;
  j["longitudes"] = ds.grid().longitudes_deg;
  j["epoch_hours_start"] = ds.start_hours();
  j["step_hours"] = ds.step_hours();
  auto& vars = j["variables"] = nlohmann::ordered_json::array();
  for (std::size_t v = 0; v < ds.n_var(); ++v) {
    const auto [lo, hi] = ds.min_max(v, ds.all_times());
    vars.push_back({{"name", ds.variables()[v].name},
                    {"level_hpa", ds.variables()[v].level},
                    {"id", ds.variables()[v].to_string()},
                    {"min", lo},
                    {"max", hi}});
  }
  return j;
}

inline std::vector<char> encode_dataset(const Dataset& ds) {
  ByteWriter w;
  w.bytes(kGfb1Magic);
  w.u32(static_cast<std::uint32_t>(ds.grid().n_lat()));
  w.u32(static_cast<std::uint32_t>(ds.grid().n_lon()));
  w.u32(static_cast<std::uint32_t>(ds.n_time()));
  w.u32(static_cast<std::uint32_t>(ds.n_var()));
  for (double lat : ds.grid().latitudes_deg) w.f64(lat);
  for (double lon : ds.grid().longitudes_deg) w.f64(lon);
  w.i64(ds.start_hours());
  w.u32(ds.step_hours());
  for (const auto& v : ds.variables()) {
    w.str16(v.name);
    w.i32(v.level);
  }
  for (float x : ds.raw()) w.f32(x);
  return w.buffer();
}

inline Dataset decode_dataset(std::vector<char> bytes, const std::string& what = "GFB1 buffer") {
  ByteReader r(std::move(bytes), what);
  if (r.remaining() < 4 || r.bytes(4) != kGfb1Magic) throw DecodeError(what + ": bad magic (expected GFB1)");
  const std::uint32_t n_lat = r.u32(), n_lon = r.u32(), n_time = r.u32(), n_var = r.u32();
  if (n_lat == 0 || n_lon == 0 || n_var == 0) throw DecodeError(what + ": zero-sized dimension");
  GridSpec grid;
  grid.latitudes_deg.resize(n_lat);
  grid.longitudes_deg.resize(n_lon);
  for (auto& x : grid.latitudes_deg) x = r.f64();
  for (auto& x : grid.longitudes_deg) x = r.f64();
  const std::int64_t start = r.i64();
  const std::uint32_t step = r.u32();
  std::vector<VariableId> vars(n_var);
  for (auto& v : vars) {
    v.name = r.str16();
    v.level = r.i32();
  }
  const std::size_t count = static_cast<std::size_t>(n_time) * n_var * n_lat * n_lon;
  r.need(count * 4);
  std::vector<float> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = r.f32();
    if (!std::isfinite(data[i])) {
      const std::size_t pts = static_cast<std::size_t>(n_lat) * n_lon;
      throw DecodeError(what + ": non-finite value at payload index " + std::to_string(i) + " (time " +
                        std::to_string(i / (pts * n_var)) + ", variable " + vars[(i / pts) % n_var].to_string() +
                        ", lat " + std::to_string((i % pts) / n_lon) + ", lon " + std::to_string(i % n_lon) + ")");
    }
  }
  if (r.remaining() != 0) throw DecodeError(what + ": trailing bytes after payload");
  try {
    return Dataset(std::move(grid), start, step, std::move(vars), n_time, std::move(data));
  } catch (const InvalidArgument& e) {
    throw DecodeError(what + ": " + e.what());
  }
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  ds.validate();
  write_bytes(path, encode_dataset(ds));
  write_text(manifest_path(path), dataset_manifest(ds).dump(2) + "\n");
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(read_bytes(path), path.string());
}

}  // namespace probcast::io
