#pragma once

// GFD1 density container (little-endian):
//   "GFD1", u32 n_lat, n_lon, n_samples, n_bins, f64 v_min, v_max,
//   u32 lead_steps, n_samples x u32 input time index,
//   f32 probs [sample][lat][lon][bin].
// save_densities also writes "<path>.json".

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "probcast/binning.hpp"
#include "probcast/io/bytes.hpp"
#include "probcast/io/gfb1.hpp"

namespace probcast::io {

inline constexpr std::string_view kGfd1Magic = "GFD1";

struct DensityFile {
  std::vector<std::size_t> times;
  std::size_t lead = 0;
  std::vector<DensityGrid> densities;
};

inline std::vector<char> encode_densities(const DensityFile& f) {
  detail::require(!f.densities.empty(), "no densities to encode");
  detail::require(f.times.size() == f.densities.size(), "one time index per density grid");
  const auto& d0 = f.densities.front();
  ByteWriter w;
  w.bytes(kGfd1Magic);
  w.u32(static_cast<std::uint32_t>(d0.n_lat));
  w.u32(static_cast<std::uint32_t>(d0.n_lon));
  w.u32(static_cast<std::uint32_t>(f.densities.size()));
  w.u32(static_cast<std::uint32_t>(d0.n_bins()));
  w.f64(d0.spec.v_min);
  w.f64(d0.spec.v_max);
  w.u32(static_cast<std::uint32_t>(f.lead));
  for (std::size_t t : f.times) w.u32(static_cast<std::uint32_t>(t));
  for (const auto& d : f.densities) {
    detail::require(d.spec == d0.spec && d.n_lat == d0.n_lat && d.n_lon == d0.n_lon,
                    "density grids differ in bin spec or grid");
    for (double p : d.probs) w.f32(static_cast<float>(p));
  }
  return w.buffer();
}

inline DensityFile decode_densities(std::vector<char> bytes, const std::string& what = "GFD1 buffer") {
  ByteReader r(std::move(bytes), what);
  if (r.remaining() < 4 || r.bytes(4) != kGfd1Magic) throw DecodeError(what + ": bad magic (expected GFD1)");
  const std::uint32_t n_lat = r.u32(), n_lon = r.u32(), n_samples = r.u32(), n_bins = r.u32();
  BinSpec spec;
  spec.v_min = r.f64();
  spec.v_max = r.f64();
  spec.n_bins = n_bins;
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw DecodeError(what + ": " + e.what());
  }
  if (n_lat == 0 || n_lon == 0) throw DecodeError(what + ": zero-sized grid");
  DensityFile f;
  f.lead = r.u32();
  f.times.resize(n_samples);
  for (auto& t : f.times) t = r.u32();
  const std::size_t per = static_cast<std::size_t>(n_lat) * n_lon * n_bins;
  r.need(per * n_samples * 4);
  f.densities.reserve(n_samples);
  for (std::uint32_t s = 0; s < n_samples; ++s) {
    DensityGrid d(spec, n_lat, n_lon);
    for (auto& p : d.probs) {
      p = r.f32();
      if (!std::isfinite(p) || p < 0.0) throw DecodeError(what + ": invalid probability in sample " + std::to_string(s));
    }
    f.densities.push_back(std::move(d));
  }
  if (r.remaining() != 0) throw DecodeError(what + ": trailing bytes after payload");
  return f;
}

inline void save_densities(const DensityFile& f, const std::filesystem::path& path,
                           const nlohmann::ordered_json& extra = {}) {
  write_bytes(path, encode_densities(f));
  nlohmann::ordered_json j;
  j["format"] = "GFD1";
  j["n_samples"] = f.densities.size();
  j["n_lat"] = f.densities.front().n_lat;
  j["n_lon"] = f.densities.front().n_lon;
  j["bins"] = f.densities.front().spec;
  j["lead_steps"] = f.lead;
  j["times"] = f.times;
  if (!extra.is_null()) j["info"] = extra;
  write_text(manifest_path(path), j.dump(2) + "\n");
}

inline DensityFile load_densities(const std::filesystem::path& path) {
  return decode_densities(read_bytes(path), path.string());
}

}  // namespace probcast::io
