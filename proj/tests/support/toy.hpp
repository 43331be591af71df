#pragma once

#include "probcast/model/training.hpp"
#include "probcast/synth.hpp"

namespace probcast::tcheck {

inline SynthConfig toy_synth(std::size_t nl = 8, std::size_t nk = 16, std::size_t steps = 400) {
  SynthConfig c;
  c.n_lat = nl;
  c.n_lon = nk;
  c.n_steps = steps;
  c.levels = {500, 850};
  return c;
}

inline ResNetConfig toy_model(OutputMode mode = OutputMode::categorical, std::size_t bins = 10) {
  ResNetConfig c;
  c.n_blocks = 1;
  c.channels = 8;
  c.mode = mode;
  c.n_bins = bins;
  c.inputs = {{"z", 500}, {"t", 850}};
  c.target = {"z", 500};
  c.lead_hours = 24;
  return c;
}

inline TrainingSchedule toy_schedule(std::size_t epochs = 3) {
  TrainingSchedule s;
  s.initial_lr = 1e-3;
  s.max_epochs = epochs;
  s.batch_size = 16;
  return s;
}

/// A dataset plus a briefly trained categorical model, built once per process.
struct ToyWorld {
  Dataset ds;
  SplitPlan plan;
  ResNet<float> model;
  TrainHistory history;
};

inline ToyWorld make_toy_world(std::uint64_t seed = 0, std::size_t epochs = 3) {
  ToyWorld w;
  w.ds = synth_generate(toy_synth(), seed);
  w.plan = SplitPlan::chronological(w.ds.n_time());
  w.model = prepare_model<float>(toy_model(), w.ds, w.plan.train, seed);
  w.history = train(w.model, w.ds, w.plan.train, w.plan.neural_validation, {.schedule = toy_schedule(epochs), .seed = seed});
  return w;
}

inline const ToyWorld& toy_world() {
  static const ToyWorld w = make_toy_world();
  return w;
}

}  // namespace probcast::tcheck
