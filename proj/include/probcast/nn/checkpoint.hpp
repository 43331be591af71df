#pragma once

// PWNN checkpoint (little-endian):
//   "PWNN", u32 version, u32 json length, config JSON,
//   u32 n_tensors, then per tensor: u16 name length, name, u32 rank,
//   u32 dims[rank], f32 values.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "probcast/io/bytes.hpp"
#include "probcast/nn/params.hpp"

namespace probcast::nn {

inline constexpr std::string_view kCheckpointMagic = "PWNN";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> tensor;
};

struct Checkpoint {
  nlohmann::ordered_json config;
  std::vector<NamedTensor> tensors;

  const Tensor<float>& at(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return t.tensor;
    throw DecodeError("checkpoint has no tensor named " + name);
  }
};

inline std::vector<char> encode_checkpoint(const Checkpoint& ck) {
  io::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  const std::string cfg = ck.config.dump();
  w.u32(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg);
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    w.str16(t.name);
    w.u32(static_cast<std::uint32_t>(t.tensor.rank()));
    for (std::size_t d : t.tensor.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float x : t.tensor.data) w.f32(x);
  }
  return w.buffer();
}

inline Checkpoint decode_checkpoint(std::vector<char> bytes, const std::string& what = "checkpoint") {
  io::ByteReader r(std::move(bytes), what);
  if (r.remaining() < 4 || r.bytes(4) != kCheckpointMagic) throw DecodeError(what + ": bad magic (expected PWNN)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw DecodeError(what + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const std::string cfg = r.bytes(r.u32());
  try {
    ck.config = nlohmann::ordered_json::parse(cfg);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(what + ": config JSON is malformed: " + e.what());
  }
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedTensor t;
    t.name = r.str16();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw DecodeError(what + ": implausible rank for " + t.name);
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    const std::size_t count = shape_size(shape);
    r.need(count * 4);
    std::vector<float> data(count);
    for (auto& x : data) {
      x = r.f32();
      if (!std::isfinite(x)) throw DecodeError(what + ": non-finite value in " + t.name);
    }
    t.tensor = Tensor<float>(std::move(shape), std::move(data));
    ck.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw DecodeError(what + ": trailing bytes");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  io::write_bytes(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_bytes(path), path.string());
}

template <class T>
std::vector<NamedTensor> export_params(const ParamStore<T>& store) {
  std::vector<NamedTensor> out;
  for (const auto& p : store.items()) out.push_back({p.name, p.var->value.template cast<float>()});
  return out;
}

/// Copies tensors into a store built with the same layout.
template <class T>
void import_params(ParamStore<T>& store, const Checkpoint& ck) {
  for (auto& p : store.items()) {
    const Tensor<float>& src = ck.at(p.name);
    if (src.shape != p.var->value.shape)
      throw DecodeError("checkpoint tensor " + p.name + " has shape " + shape_string(src.shape) + ", model expects " +
                        shape_string(p.var->value.shape));
    p.var->value = src.template cast<T>();
  }
}

}  // namespace probcast::nn
