#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "probcast/binning.hpp"
#include "probcast/core/parallel.hpp"
#include "probcast/core/random.hpp"
#include "probcast/model/resnet.hpp"
#include "probcast/model/schedule.hpp"
#include "probcast/nn/adam.hpp"

namespace probcast {

/// Input times t of a range whose target t + lead also lies in the range.
inline std::vector<std::size_t> sample_times(TimeRange range, std::size_t lead) {
  std::vector<std::size_t> out;
  for (std::size_t t = range.begin; t + lead < range.end; ++t) out.push_back(t);
  return out;
}

/// Bins (categorical) or standardized values (continuous) of the target at
/// t + lead for each sample, flattened (sample, lat, lon).
template <class T>
struct Targets {
  std::vector<std::int32_t> bins;
  std::vector<T> values;
};

template <class T>
Targets<T> make_targets(const ResNet<T>& model, const Dataset& ds, std::span<const std::size_t> times,
                        std::size_t lead, ClampStats* clamps = nullptr) {
  const std::size_t v = ds.index_of(model.config.target), pts = ds.grid().size();
  Targets<T> out;
  if (model.categorical()) {
    out.bins.reserve(times.size() * pts);
    for (std::size_t t : times)
      for (float x : ds.slice(t + lead, v)) {
        out.bins.push_back(static_cast<std::int32_t>(model.bins->bin_of(x)));
        if (clamps) {
          ++clamps->total;
          if (x < model.bins->v_min) ++clamps->below;
          if (x > model.bins->v_max) ++clamps->above;
        }
      }
  } else {
    out.values.reserve(times.size() * pts);
    for (std::size_t t : times)
      for (float x : ds.slice(t + lead, v))
        out.values.push_back(static_cast<T>((x - model.target_mean) / model.target_std));
  }
  return out;
}

struct TrainOptions {
  TrainingSchedule schedule;
  std::uint64_t seed = 0;
  /// Workers for validation-loss evaluation.
  std::size_t workers = thread_budget();
  /// Called after each epoch with its record.
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Fits bins/standardization on the training split and initializes the
/// model for the dataset. Bins come from the training range only.
template <class T>
ResNet<T> prepare_model(const ResNetConfig& cfg, const Dataset& ds, TimeRange train, std::uint64_t seed) {
  ResNet<T> m = ResNet<T>::build(cfg, seed);
  m.input_stats = fit_standardization(ds, cfg.inputs, train);
  if (m.categorical()) {
    m.bins = fit_bins(ds, cfg.target, cfg.n_bins, train);
  } else {
    const auto s = fit_standardization(ds, {cfg.target}, train);
    m.target_mean = s.mean[0];
    m.target_std = s.stddev[0];
  }
  return m;
}

namespace detail {

template <class T>
nn::Var<T> model_loss(ResNet<T>& model, const nn::Var<T>& out, const Targets<T>& tg, std::size_t first,
                      std::size_t count, std::size_t pts) {
  if (model.categorical())
    return nn::sparse_categorical_cross_entropy<T>(out, std::span<const std::int32_t>(tg.bins).subspan(first * pts, count * pts));
  nn::Tensor<T> target(out->value.shape,
                       std::vector<T>(tg.values.begin() + static_cast<std::ptrdiff_t>(first * pts),
                                      tg.values.begin() + static_cast<std::ptrdiff_t>((first + count) * pts)));
  return nn::mse_loss<T>(out, nn::constant(std::move(target)));
}

}  // namespace detail

/// Mean loss over samples with dropout off and running normalization
/// statistics; batches are evaluated in parallel and reduced in order.
template <class T>
double evaluate_loss(ResNet<T>& model, const Dataset& ds, std::span<const std::size_t> times, const Targets<T>& tg,
                     std::size_t batch_size, std::size_t workers = thread_budget()) {
  detail::require(!times.empty(), "loss evaluation needs at least one sample");
  const std::size_t pts = ds.grid().size();
  const std::size_t n_batches = (times.size() + batch_size - 1) / batch_size;
  std::vector<double> sums(n_batches);
  parallel_for(
      n_batches,
      [&](std::size_t bi) {
        nn::NoGradGuard guard;
        const std::size_t first = bi * batch_size, count = std::min(batch_size, times.size() - first);
        const auto out = model.forward(model.make_inputs(ds, times.subspan(first, count)));
        sums[bi] = detail::model_loss(model, out, tg, first, count, pts)->value.data[0] * static_cast<double>(count);
      },
      workers);
  double total = 0.0;
  for (double s : sums) total += s;
  return total / static_cast<double>(times.size());
}

/// Trains with Adam under the plateau schedule and restores the weights of
/// the best validation epoch.
template <class T>
TrainHistory train(ResNet<T>& model, const Dataset& ds, TimeRange train_range, TimeRange val_range,
                   const TrainOptions& opt) {
  opt.schedule.validate();
  const std::size_t lead = lead_steps(ds, model.config.lead_hours);
  const auto train_times = sample_times(train_range, lead);
  const auto val_times = sample_times(val_range, lead);
  detail::require(!train_times.empty(), "training range is shorter than the lead time");
  detail::require(!val_times.empty(), "validation range is shorter than the lead time");
  detail::require(train_range.end <= val_range.begin || val_range.end <= train_range.begin,
                  "training and validation ranges overlap");
  const auto train_tg = make_targets(model, ds, train_times, lead);
  const auto val_tg = make_targets(model, ds, val_times, lead);
  const std::size_t pts = ds.grid().size(), bs = opt.schedule.batch_size;

  nn::Adam<T> adam(model.params, {.learning_rate = opt.schedule.initial_lr});
  Rng order_rng = make_rng(opt.seed, 1);
  Rng drop_rng = make_rng(opt.seed, 2);
  nn::ParamStore<T> best = model.params.clone();
  std::vector<std::size_t> order(train_times.size());

  auto epoch_fn = [&](std::size_t epoch, double lr) -> EpochLosses {
    adam.set_learning_rate(lr);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order.begin(), order.end(), order_rng);
    double total = 0.0;
    std::vector<std::size_t> batch_times;
    Targets<T> batch_tg;
    for (std::size_t first = 0, bi = 0; first < order.size(); first += bs, ++bi) {
      const std::size_t count = std::min(bs, order.size() - first);
      batch_times.clear();
      batch_tg.bins.clear();
      batch_tg.values.clear();
      for (std::size_t i = first; i < first + count; ++i) {
        const std::size_t s = order[i];
        batch_times.push_back(train_times[s]);
        if (model.categorical())
          batch_tg.bins.insert(batch_tg.bins.end(), train_tg.bins.begin() + static_cast<std::ptrdiff_t>(s * pts),
                               train_tg.bins.begin() + static_cast<std::ptrdiff_t>((s + 1) * pts));
        else
          batch_tg.values.insert(batch_tg.values.end(), train_tg.values.begin() + static_cast<std::ptrdiff_t>(s * pts),
                                 train_tg.values.begin() + static_cast<std::ptrdiff_t>((s + 1) * pts));
      }
      const auto out = model.forward(model.make_inputs(ds, batch_times), {.train_norm = true, .dropout = true},
                                     &drop_rng);
      const auto loss = detail::model_loss(model, out, batch_tg, 0, count, pts);
      const double l = loss->value.data[0];
      if (!std::isfinite(l))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(bi));
      nn::backward(loss);
      try {
        adam.step();
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(bi));
      }
      total += l * static_cast<double>(count);
    }
    const double val = evaluate_loss(model, ds, val_times, val_tg, bs, opt.workers);
    if (!std::isfinite(val)) throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
    return {total / static_cast<double>(order.size()), val};
  };

  TrainHistory hist = run_schedule(
      opt.schedule, epoch_fn, [&](std::size_t) { best = model.params.clone(); }, opt.on_epoch);
  if (hist.best_epoch < hist.epochs.size()) model.params.copy_values_from(best);
  return hist;
}

/// Normalized density per sample (inputs at `times`).
template <class T>
std::vector<DensityGrid> predict_density(ResNet<T>& model, const Dataset& ds, std::span<const std::size_t> times,
                                         bool dropout_enabled = false, Rng* rng = nullptr,
                                         std::size_t batch_size = 32) {
  if (!model.categorical()) throw ModeError("predict_density needs a categorical model");
  detail::require(!dropout_enabled || rng != nullptr, "stochastic prediction needs a random stream");
  const std::size_t nl = ds.grid().n_lat(), nk = ds.grid().n_lon(), pts = nl * nk, nb = model.bins->n_bins;
  std::vector<DensityGrid> out;
  out.reserve(times.size());
  nn::NoGradGuard guard;
  for (std::size_t first = 0; first < times.size(); first += batch_size) {
    const std::size_t count = std::min(batch_size, times.size() - first);
    const auto y = model.forward(model.make_inputs(ds, times.subspan(first, count)), {.dropout = dropout_enabled}, rng);
    for (std::size_t s = 0; s < count; ++s) {
      DensityGrid d(*model.bins, nl, nk);
      const T* src = y->value.data.data() + s * nb * pts;
      for (std::size_t c = 0; c < nb; ++c)
        for (std::size_t p = 0; p < pts; ++p) d.probs[p * nb + c] = src[c * pts + p];
      // renormalize in double; single-precision softmax sums drift by ~n_bins ulp
      for (std::size_t p = 0; p < pts; ++p) {
        double* q = d.point(p);
        double total = 0.0;
        for (std::size_t c = 0; c < nb; ++c) total += q[c];
        for (std::size_t c = 0; c < nb; ++c) q[c] /= total;
      }
      out.push_back(std::move(d));
    }
  }
  return out;
}

/// Real-valued target prediction per sample.
template <class T>
std::vector<Field> predict_continuous(ResNet<T>& model, const Dataset& ds, std::span<const std::size_t> times,
                                      std::size_t batch_size = 32) {
  if (model.categorical()) throw ModeError("predict_continuous needs a continuous model");
  const std::size_t nl = ds.grid().n_lat(), nk = ds.grid().n_lon(), pts = nl * nk;
  std::vector<Field> out;
  out.reserve(times.size());
  nn::NoGradGuard guard;
  for (std::size_t first = 0; first < times.size(); first += batch_size) {
    const std::size_t count = std::min(batch_size, times.size() - first);
    const auto y = model.forward(model.make_inputs(ds, times.subspan(first, count)));
    for (std::size_t s = 0; s < count; ++s) {
      Field f(model.config.target, nl, nk);
      for (std::size_t p = 0; p < pts; ++p)
        f.values[p] = model.target_mean + model.target_std * static_cast<double>(y->value.data[s * pts + p]);
      out.push_back(std::move(f));
    }
  }
  return out;
}

/// Observed target fields at t + lead.
inline std::vector<Field> target_fields(const Dataset& ds, const VariableId& target, std::span<const std::size_t> times,
                                        std::size_t lead) {
  std::vector<Field> out;
  out.reserve(times.size());
  const std::size_t v = ds.index_of(target);
  for (std::size_t t : times) out.push_back(ds.field(t + lead, v));
  return out;
}

}  // namespace probcast
