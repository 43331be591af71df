#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "probcast/binning.hpp"
#include "probcast/core/random.hpp"
#include "probcast/model/schedule.hpp"
#include "probcast/nn/adam.hpp"
#include "probcast/nn/checkpoint.hpp"
#include "probcast/nn/ops.hpp"

namespace probcast {

/// Pooled-ensemble expectations of one learner, one Field per sample.
struct LearnerOutput {
  std::string id;
  std::vector<Field> expectations;
};

/// Rows are (sample, gridpoint); columns are learners, plus latitude when
/// enabled.
struct FeatureTable {
  std::size_t n_rows = 0;
  std::size_t n_features = 0;
  std::vector<double> values;  // row-major
  std::vector<std::string> names;

  double at(std::size_t r, std::size_t c) const { return values[r * n_features + c]; }

  std::string to_csv() const {
    std::string out;
    for (std::size_t c = 0; c < n_features; ++c) out += (c ? "," : "") + names[c];
    out += "\n";
    char buf[40];
    for (std::size_t r = 0; r < n_rows; ++r) {
      for (std::size_t c = 0; c < n_features; ++c) {
        std::snprintf(buf, sizeof buf, "%s%.10g", c ? "," : "", at(r, c));
        out += buf;
      }
      out += "\n";
    }
    return out;
  }
};

/// Concatenates learner expectations per (sample, gridpoint), raw units.
inline FeatureTable assemble_stack_inputs(const std::vector<LearnerOutput>& learners, const GridSpec& grid,
                                          bool latitude_feature = false) {
  detail::require(!learners.empty(), "stacking needs at least one learner");
  const std::size_t ns = learners.front().expectations.size(), pts = grid.size();
  for (const auto& l : learners) {
    if (l.expectations.size() != ns)
      throw InvalidArgument("learner " + l.id + " is missing samples (" + std::to_string(l.expectations.size()) +
                            " of " + std::to_string(ns) + ")");
    for (const auto& f : l.expectations)
      detail::require(f.n_lat == grid.n_lat() && f.n_lon == grid.n_lon(), "learner " + l.id + " field off-grid");
  }
  FeatureTable tab;
  tab.n_rows = ns * pts;
  tab.n_features = learners.size() + (latitude_feature ? 1 : 0);
  for (const auto& l : learners) tab.names.push_back(l.id);
  if (latitude_feature) tab.names.push_back("latitude");
  tab.values.resize(tab.n_rows * tab.n_features);
  for (std::size_t s = 0; s < ns; ++s)
    for (std::size_t p = 0; p < pts; ++p) {
      double* row = tab.values.data() + (s * pts + p) * tab.n_features;
      for (std::size_t c = 0; c < learners.size(); ++c) row[c] = learners[c].expectations[s].values[p];
      if (latitude_feature) row[learners.size()] = grid.latitudes_deg[p / grid.n_lon()];
    }
  return tab;
}

struct StackConfig {
  std::size_t hidden_layers = 2;
  std::size_t hidden_width = 36;
  bool latitude_feature = false;
  /// Fraction of rows held out (shuffled) for the plateau schedule.
  double validation_fraction = 0.1;
  TrainingSchedule schedule{.initial_lr = 1e-3, .max_epochs = 100, .batch_size = 256};
};

/// Per-gridpoint dense network: features -> [width ReLU] x layers -> softmax.
class StackModel {
 public:
  StackConfig config;
  BinSpec bins;
  std::vector<std::string> feature_names;
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  nn::ParamStore<float> params;

  static StackModel build(const StackConfig& cfg, const BinSpec& bins, std::vector<std::string> feature_names,
                          std::uint64_t seed) {
    detail::require(cfg.hidden_layers >= 1 && cfg.hidden_width >= 1, "stack layer widths must be at least 1");
    detail::require(!feature_names.empty(), "stack needs at least one feature");
    StackModel m;
    m.config = cfg;
    m.bins = bins;
    m.feature_names = std::move(feature_names);
    const std::size_t nf = m.feature_names.size();
    m.feature_mean.assign(nf, 0.0);
    m.feature_std.assign(nf, 1.0);
    Rng rng = make_rng(seed, 0);
    std::size_t in = nf;
    for (std::size_t l = 0; l <= cfg.hidden_layers; ++l) {
      const std::size_t out = l == cfg.hidden_layers ? bins.n_bins : cfg.hidden_width;
      const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      nn::Tensor<float> w({out, in});
      for (float& x : w.data) x = static_cast<float>(uniform(rng, -limit, limit));
      m.params.add("dense" + std::to_string(l) + ".weight", std::move(w));
      m.params.add("dense" + std::to_string(l) + ".bias", nn::Tensor<float>({out}, 0.0f));
      in = out;
    }
    return m;
  }

  std::size_t n_features() const { return feature_names.size(); }

  /// Standardized (rows, features) tensor for rows [first, first + count).
  nn::Tensor<float> standardized(const FeatureTable& tab, std::span<const std::size_t> rows) const {
    nn::Tensor<float> x({rows.size(), n_features()});
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t c = 0; c < n_features(); ++c)
        x.data[i * n_features() + c] =
            static_cast<float>((tab.at(rows[i], c) - feature_mean[c]) / feature_std[c]);
    return x;
  }

  /// Probabilities (rows, n_bins).
  nn::Var<float> forward(const nn::Tensor<float>& x) const {
    nn::Var<float> h = nn::constant(x);
    for (std::size_t l = 0; l <= config.hidden_layers; ++l) {
      const std::string p = "dense" + std::to_string(l);
      h = nn::linear(h, params.at(p + ".weight"), params.at(p + ".bias"));
      if (l < config.hidden_layers) h = nn::relu(h);
    }
    return nn::softmax(h);
  }

  nn::Checkpoint to_checkpoint() const {
    nn::Checkpoint ck;
    ck.config["kind"] = "stack";
    ck.config["hidden_layers"] = config.hidden_layers;
    ck.config["hidden_width"] = config.hidden_width;
    ck.config["latitude_feature"] = config.latitude_feature;
    ck.config["bins"] = bins;
    ck.config["features"] = feature_names;
    ck.config["feature_mean"] = feature_mean;
    ck.config["feature_std"] = feature_std;
    ck.tensors = nn::export_params(params);
    return ck;
  }

  static StackModel from_checkpoint(const nn::Checkpoint& ck) {
    if (ck.config.value("kind", "") != "stack") throw DecodeError("checkpoint does not hold a stack model");
    StackModel m;
    try {
      StackConfig cfg;
      cfg.hidden_layers = ck.config.at("hidden_layers").get<std::size_t>();
      cfg.hidden_width = ck.config.at("hidden_width").get<std::size_t>();
      cfg.latitude_feature = ck.config.at("latitude_feature").get<bool>();
      m = build(cfg, ck.config.at("bins").get<BinSpec>(), ck.config.at("features").get<std::vector<std::string>>(), 0);
      m.feature_mean = ck.config.at("feature_mean").get<std::vector<double>>();
      m.feature_std = ck.config.at("feature_std").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw DecodeError(std::string("malformed stack config: ") + e.what());
    }
    if (m.feature_mean.size() != m.n_features() || m.feature_std.size() != m.n_features())
      throw DecodeError("stack feature statistics do not match the feature list");
    nn::import_params(m.params, ck);
    return m;
  }

  void save(const std::filesystem::path& path) const { nn::save_checkpoint(to_checkpoint(), path); }
  static StackModel load(const std::filesystem::path& path) { return from_checkpoint(nn::load_checkpoint(path)); }
};

struct StackTrainResult {
  TrainHistory history;
  /// True when every training target fell into one bin.
  bool single_class = false;
};

/// Trains on all rows of `tab` (built from data the learners never saw)
/// with a shuffled validation split. Zero epochs return the initialized
/// model with only its feature statistics fitted.
inline StackTrainResult train_stack(StackModel& model, const FeatureTable& tab, std::span<const std::int32_t> bins,
                                    std::uint64_t seed) {
  const auto& cfg = model.config;
  detail::require(tab.n_features == model.n_features(), "feature count does not match the stack model");
  detail::require(bins.size() == tab.n_rows, "one target bin per feature row is required");
  detail::require(tab.n_rows >= 2, "stacking needs at least two rows");
  detail::require(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0,
                  "validation fraction must lie in (0, 1)");
  for (std::int32_t b : bins)
    detail::require(b >= 0 && static_cast<std::size_t>(b) < model.bins.n_bins, "target bin out of range");
  StackTrainResult result;
  result.single_class = std::all_of(bins.begin(), bins.end(), [&](std::int32_t b) { return b == bins.front(); });

  for (std::size_t c = 0; c < tab.n_features; ++c) {
    double mu = 0.0;
    for (std::size_t r = 0; r < tab.n_rows; ++r) mu += tab.at(r, c);
    mu /= static_cast<double>(tab.n_rows);
    double sq = 0.0;
    for (std::size_t r = 0; r < tab.n_rows; ++r) sq += (tab.at(r, c) - mu) * (tab.at(r, c) - mu);
    const double sd = std::sqrt(sq / static_cast<double>(tab.n_rows));
    model.feature_mean[c] = mu;
    model.feature_std[c] = sd > 0.0 ? sd : 1.0;
  }

  Rng split_rng = make_rng(seed, 1);
  std::vector<std::size_t> rows(tab.n_rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  shuffle(rows.begin(), rows.end(), split_rng);
  const std::size_t n_val =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(cfg.validation_fraction * tab.n_rows)), 1,
                              tab.n_rows - 1);
  std::vector<std::size_t> val(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(rows.begin() + static_cast<std::ptrdiff_t>(n_val), rows.end());

  const std::size_t bs = cfg.schedule.batch_size;
  auto gather = [&](std::span<const std::size_t> r) {
    std::vector<std::int32_t> t(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) t[i] = bins[r[i]];
    return t;
  };
  auto val_loss = [&] {
    nn::NoGradGuard guard;
    double total = 0.0;
    for (std::size_t first = 0; first < val.size(); first += 4096) {
      const auto chunk = std::span<const std::size_t>(val).subspan(first, std::min<std::size_t>(4096, val.size() - first));
      const auto y = model.forward(model.standardized(tab, chunk));
      total += nn::sparse_categorical_cross_entropy<float>(y, gather(chunk))->value.data[0] *
               static_cast<double>(chunk.size());
    }
    return total / static_cast<double>(val.size());
  };

  nn::Adam<float> adam(model.params, {.learning_rate = cfg.schedule.initial_lr});
  Rng order_rng = make_rng(seed, 2);
  nn::ParamStore<float> best = model.params.clone();
  auto epoch_fn = [&](std::size_t epoch, double lr) -> EpochLosses {
    adam.set_learning_rate(lr);
    shuffle(train.begin(), train.end(), order_rng);
    double total = 0.0;
    for (std::size_t first = 0; first < train.size(); first += bs) {
      const auto chunk = std::span<const std::size_t>(train).subspan(first, std::min(bs, train.size() - first));
      const auto loss = nn::sparse_categorical_cross_entropy<float>(model.forward(model.standardized(tab, chunk)),
                                                                    gather(chunk));
      const double l = loss->value.data[0];
      if (!std::isfinite(l)) throw NumericError("non-finite stack loss at epoch " + std::to_string(epoch));
      nn::backward(loss);
      adam.step();
      total += l * static_cast<double>(chunk.size());
    }
    return {total / static_cast<double>(train.size()), val_loss()};
  };
  result.history = run_schedule(cfg.schedule, epoch_fn, [&](std::size_t) { best = model.params.clone(); });
  if (result.history.best_epoch < result.history.epochs.size()) model.params.copy_values_from(best);
  return result;
}

/// Densities for consecutive blocks of `n_lat * n_lon` rows (one per sample).
inline std::vector<DensityGrid> stack_predict(const StackModel& model, const FeatureTable& tab, const GridSpec& grid) {
  if (tab.n_features != model.n_features())
    throw InvalidArgument("stack expects " + std::to_string(model.n_features()) + " features, got " +
                          std::to_string(tab.n_features));
  const std::size_t pts = grid.size();
  detail::require(tab.n_rows % pts == 0, "feature rows are not whole grids");
  std::vector<DensityGrid> out;
  nn::NoGradGuard guard;
  std::vector<std::size_t> rows(pts);
  for (std::size_t s = 0; s < tab.n_rows / pts; ++s) {
    std::iota(rows.begin(), rows.end(), s * pts);
    const auto y = model.forward(model.standardized(tab, rows));
    DensityGrid d(model.bins, grid.n_lat(), grid.n_lon());
    for (std::size_t i = 0; i < d.probs.size(); ++i) d.probs[i] = y->value.data[i];
    out.push_back(std::move(d));
  }
  return out;
}

/// Unweighted pointwise mean of learner expectations, per sample.
inline std::vector<Field> average_combine(const std::vector<LearnerOutput>& learners) {
  detail::require(!learners.empty(), "averaging needs at least one learner");
  std::vector<Field> out = learners.front().expectations;
  for (std::size_t l = 1; l < learners.size(); ++l) {
    detail::require(learners[l].expectations.size() == out.size(), "learners cover different samples");
    for (std::size_t s = 0; s < out.size(); ++s) {
      detail::require(learners[l].expectations[s].same_shape(out[s]), "learner fields differ in shape");
      for (std::size_t p = 0; p < out[s].values.size(); ++p) out[s].values[p] += learners[l].expectations[s].values[p];
    }
  }
  const double n = static_cast<double>(learners.size());
  for (auto& f : out)
    for (double& x : f.values) x /= n;
  return out;
}

}  // namespace probcast
