#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "probcast/binning.hpp"
#include "probcast/core/random.hpp"
#include "probcast/grid.hpp"
#include "probcast/nn/checkpoint.hpp"
#include "probcast/nn/ops.hpp"
#include "probcast/nn/params.hpp"

namespace probcast {

enum class OutputMode { categorical, continuous };
enum class NormKind { batch, layer };

inline std::string to_string(OutputMode m) { return m == OutputMode::categorical ? "categorical" : "continuous"; }
inline std::string to_string(NormKind n) { return n == NormKind::batch ? "batch" : "layer"; }

struct ResNetConfig {
  std::size_t n_blocks = 5;
  /// 0 selects the mode default: 100 categorical, 64 continuous.
  std::size_t channels = 0;
  std::size_t kernel = 5;
  /// 0 builds the network without dropout.
  double dropout_rate = 0.1;
  OutputMode mode = OutputMode::categorical;
  NormKind norm = NormKind::batch;
  double leaky_alpha = 0.3;
  std::vector<VariableId> inputs;
  VariableId target{"z", 500};
  std::int64_t lead_hours = 72;
  std::size_t n_bins = 100;

  std::size_t effective_channels() const {
    if (channels > 0) return channels;
    return mode == OutputMode::categorical ? 100 : 64;
  }
  std::size_t output_channels() const { return mode == OutputMode::categorical ? n_bins : 1; }

  void validate() const {
    detail::require(n_blocks >= 1, "a ResNet needs at least one residual block");
    detail::require(kernel % 2 == 1, "kernel size must be odd");
    detail::require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout rate must lie in [0, 1)");
    detail::require(!inputs.empty(), "a ResNet needs at least one input variable");
    detail::require(target.name == "z" || target.name == "t",
                    "target must be a geopotential (z) or temperature (t) variable");
    detail::require(lead_hours >= 0, "lead time must be non-negative");
    if (mode == OutputMode::categorical) detail::require(n_bins >= 2, "need at least two bins");
  }
};

inline nlohmann::ordered_json config_to_json(const ResNetConfig& c) {
  nlohmann::ordered_json j;
  j["n_blocks"] = c.n_blocks;
  j["channels"] = c.effective_channels();
  j["kernel"] = c.kernel;
  j["dropout_rate"] = c.dropout_rate;
  j["mode"] = to_string(c.mode);
  j["norm"] = to_string(c.norm);
  j["leaky_alpha"] = c.leaky_alpha;
  auto& in = j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& v : c.inputs) in.push_back(v.to_string());
  j["target"] = c.target.to_string();
  j["lead_hours"] = c.lead_hours;
  j["n_bins"] = c.n_bins;
  return j;
}

inline ResNetConfig resnet_config_from_json(const nlohmann::ordered_json& j) {
  ResNetConfig c;
  c.n_blocks = j.at("n_blocks").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.kernel = j.at("kernel").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  const auto mode = j.at("mode").get<std::string>();
  detail::require(mode == "categorical" || mode == "continuous", "unknown mode " + mode);
  c.mode = mode == "categorical" ? OutputMode::categorical : OutputMode::continuous;
  c.norm = j.at("norm").get<std::string>() == "layer" ? NormKind::layer : NormKind::batch;
  c.leaky_alpha = j.at("leaky_alpha").get<double>();
  for (const auto& v : j.at("inputs")) c.inputs.push_back(VariableId::parse(v.get<std::string>()));
  c.target = VariableId::parse(j.at("target").get<std::string>());
  c.lead_hours = j.at("lead_hours").get<std::int64_t>();
  c.n_bins = j.at("n_bins").get<std::size_t>();
  c.validate();
  return c;
}

/// Per-variable z-score statistics.
struct Standardization {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Mean and population std of each variable over a range; a zero std is
/// replaced by 1 so constant channels stay finite.
inline Standardization fit_standardization(const Dataset& ds, const std::vector<VariableId>& vars, TimeRange range) {
  detail::require(!range.empty() && range.end <= ds.n_time(), "standardization needs a non-empty range");
  Standardization s;
  for (const auto& id : vars) {
    const std::size_t v = ds.index_of(id);
    double sum = 0.0, n = 0.0;
    for (std::size_t t = range.begin; t < range.end; ++t)
      for (float x : ds.slice(t, v)) sum += x, n += 1.0;
    const double mu = sum / n;
    double sq = 0.0;
    for (std::size_t t = range.begin; t < range.end; ++t)
      for (float x : ds.slice(t, v)) sq += (x - mu) * (x - mu);
    const double sd = std::sqrt(sq / n);
    s.mean.push_back(mu);
    s.stddev.push_back(sd > 0.0 ? sd : 1.0);
  }
  return s;
}

struct ForwardOptions {
  /// Batch statistics (and running-statistic updates) instead of running ones.
  bool train_norm = false;
  bool dropout = false;
};

/// The convolutional residual network: input projection, residual blocks
/// [conv -> norm -> LeakyReLU -> dropout] + skip, then a conv head with
/// softmax (categorical) or a single linear channel (continuous).
template <class T>
class ResNet {
 public:
  ResNetConfig config;
  std::optional<BinSpec> bins;
  Standardization input_stats;
  double target_mean = 0.0;
  double target_std = 1.0;
  nn::ParamStore<T> params;

  ResNet() = default;

  static constexpr std::uint64_t kInitStreamBase = std::uint64_t{1} << 32;

  static ResNet build(const ResNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ResNet m;
    m.config = cfg;
    m.input_stats.mean.assign(cfg.inputs.size(), 0.0);
    m.input_stats.stddev.assign(cfg.inputs.size(), 1.0);
    // One stream per layer, so models differing only in their inputs or
    // depth share the initial weights of the layers they have in common.
    const auto layer_rng = [seed](std::uint64_t layer) { return make_rng(seed, kInitStreamBase + layer); };
    const std::size_t c = cfg.effective_channels(), k = cfg.kernel, cin = cfg.inputs.size();
    Rng rng = layer_rng(0);
    m.add_conv(rng, "proj", cin, c, k);
    for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
      const std::string p = "block" + std::to_string(i);
      rng = layer_rng(1 + i);
      m.add_conv(rng, p + ".conv", c, c, k);
      m.params.add(p + ".norm.gamma", nn::Tensor<T>({c}, T(1)));
      m.params.add(p + ".norm.beta", nn::Tensor<T>({c}, T(0)));
      if (cfg.norm == NormKind::batch) {
        m.params.add(p + ".norm.running_mean", nn::Tensor<T>({c}, T(0)), false);
        m.params.add(p + ".norm.running_var", nn::Tensor<T>({c}, T(1)), false);
      }
    }
    rng = layer_rng(kInitStreamBase - 1);
    m.add_conv(rng, "head", c, cfg.output_channels(), k);
    return m;
  }

  bool categorical() const { return config.mode == OutputMode::categorical; }
  bool has_dropout() const { return config.dropout_rate > 0.0; }

  /// Forward pass on standardized inputs (batch, n_inputs, lat, lon).
  /// Categorical models return probabilities, continuous ones the
  /// standardized prediction (batch, 1, lat, lon).
  nn::Var<T> forward(const nn::Tensor<T>& x, const ForwardOptions& opt = {}, Rng* rng = nullptr) {
    detail::require(x.rank() == 4 && x.dim(1) == config.inputs.size(),
                    "model expects input of shape (batch, " + std::to_string(config.inputs.size()) +
                        ", lat, lon), got " + nn::shape_string(x.shape));
    const T alpha = static_cast<T>(config.leaky_alpha);
    nn::Var<T> h = nn::constant(x);
    h = nn::leaky_relu(nn::conv2d(h, p("proj.weight"), p("proj.bias")), alpha);
    for (std::size_t i = 0; i < config.n_blocks; ++i) {
      const std::string b = "block" + std::to_string(i);
      nn::Var<T> r = nn::conv2d(h, p(b + ".conv.weight"), p(b + ".conv.bias"));
      if (config.norm == NormKind::batch)
        r = nn::batch_norm(r, p(b + ".norm.gamma"), p(b + ".norm.beta"), p(b + ".norm.running_mean")->value,
                           p(b + ".norm.running_var")->value, opt.train_norm);
      else
        r = nn::layer_norm(r, p(b + ".norm.gamma"), p(b + ".norm.beta"));
      r = nn::leaky_relu(r, alpha);
      r = nn::dropout(r, config.dropout_rate, opt.dropout, rng);
      h = nn::add(h, r);
    }
    nn::Var<T> out = nn::conv2d(h, p("head.weight"), p("head.bias"));
    return categorical() ? nn::softmax(out) : out;
  }

  /// Standardized (batch, n_inputs, lat, lon) inputs at the given times.
  nn::Tensor<T> make_inputs(const Dataset& ds, std::span<const std::size_t> times) const {
    const std::size_t cin = config.inputs.size(), pts = ds.grid().size();
    nn::Tensor<T> x({times.size(), cin, ds.grid().n_lat(), ds.grid().n_lon()});
    std::vector<std::size_t> idx(cin);
    for (std::size_t c = 0; c < cin; ++c) idx[c] = ds.index_of(config.inputs[c]);
    for (std::size_t b = 0; b < times.size(); ++b)
      for (std::size_t c = 0; c < cin; ++c) {
        const auto s = ds.slice(times[b], idx[c]);
        const double mu = input_stats.mean[c], inv = 1.0 / input_stats.stddev[c];
        T* dst = x.data.data() + (b * cin + c) * pts;
        for (std::size_t i = 0; i < pts; ++i) dst[i] = static_cast<T>((s[i] - mu) * inv);
      }
    return x;
  }

  nn::Checkpoint to_checkpoint() const {
    nn::Checkpoint ck;
    ck.config["kind"] = "resnet";
    ck.config["config"] = config_to_json(config);
    if (bins) ck.config["bins"] = *bins;
    ck.config["input_stats"] = {{"mean", input_stats.mean}, {"std", input_stats.stddev}};
    ck.config["target_stats"] = {{"mean", target_mean}, {"std", target_std}};
    ck.tensors = nn::export_params(params);
    return ck;
  }

  static ResNet from_checkpoint(const nn::Checkpoint& ck) {
    if (ck.config.value("kind", "") != "resnet") throw DecodeError("checkpoint does not hold a ResNet");
    ResNet m;
    try {
      m = build(resnet_config_from_json(ck.config.at("config")), 0);
      if (ck.config.contains("bins")) m.bins = ck.config.at("bins").get<BinSpec>();
      m.input_stats.mean = ck.config.at("input_stats").at("mean").get<std::vector<double>>();
      m.input_stats.stddev = ck.config.at("input_stats").at("std").get<std::vector<double>>();
      m.target_mean = ck.config.at("target_stats").at("mean").get<double>();
      m.target_std = ck.config.at("target_stats").at("std").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw DecodeError(std::string("malformed model config: ") + e.what());
    } catch (const InvalidArgument& e) {
      throw DecodeError(std::string("invalid model config: ") + e.what());
    }
    if (m.input_stats.mean.size() != m.config.inputs.size() || m.input_stats.stddev.size() != m.config.inputs.size())
      throw DecodeError("input statistics do not match the input list");
    if (m.categorical() && !m.bins) throw DecodeError("categorical checkpoint without a bin spec");
    nn::import_params(m.params, ck);
    return m;
  }

  void save(const std::filesystem::path& path) const { nn::save_checkpoint(to_checkpoint(), path); }
  static ResNet load(const std::filesystem::path& path) { return from_checkpoint(nn::load_checkpoint(path)); }

 private:
  const nn::Var<T>& p(const std::string& name) const { return params.at(name); }

  void add_conv(Rng& rng, const std::string& name, std::size_t cin, std::size_t cout, std::size_t k) {
    const double limit = std::sqrt(6.0 / static_cast<double>((cin + cout) * k * k));
    nn::Tensor<T> w({cout, cin, k, k});
    for (T& x : w.data) x = static_cast<T>(uniform(rng, -limit, limit));
    params.add(name + ".weight", std::move(w));
    params.add(name + ".bias", nn::Tensor<T>({cout}, T(0)));
  }
};

/// Closed-form trainable parameter count.
inline std::size_t resnet_parameter_count(const ResNetConfig& cfg) {
  const std::size_t c = cfg.effective_channels(), k2 = cfg.kernel * cfg.kernel, cin = cfg.inputs.size();
  const std::size_t proj = cin * c * k2 + c;
  const std::size_t block = c * c * k2 + c + 2 * c;
  const std::size_t head = c * cfg.output_channels() * k2 + cfg.output_channels();
  return proj + cfg.n_blocks * block + head;
}

}  // namespace probcast
