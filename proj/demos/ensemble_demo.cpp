// Trains a small categorical ResNet on synthetic data, pools a dropout
// ensemble and prints its scores next to the simple baselines.

#include <cstdio>

#include "probcast/probcast.hpp"

using namespace probcast;

int main() {
  SynthConfig sc;
  sc.n_lat = 8;
  sc.n_lon = 16;
  sc.n_steps = 600;
  sc.levels = {500, 850};
  const Dataset ds = synth_generate(sc, 1);
  const auto plan = SplitPlan::chronological(ds.n_time());

  ResNetConfig cfg;
  cfg.n_blocks = 1;
  cfg.channels = 8;
  cfg.n_bins = 20;
  cfg.inputs = {{"z", 500}, {"t", 850}};
  cfg.target = {"z", 500};
  cfg.lead_hours = 24;

  TrainingSchedule sched;
  sched.initial_lr = 3e-3;
  sched.max_epochs = 8;
  sched.batch_size = 16;

  auto model = prepare_model<float>(cfg, ds, plan.train, 1);
  const auto hist = train(model, ds, plan.train, plan.neural_validation,
                          {.schedule = sched, .seed = 1, .on_epoch = [](const EpochRecord& e) {
                             std::printf("epoch %2zu  train %.4f  val %.4f  lr %.2g\n", e.epoch, e.train_loss, e.val_loss, e.lr);
                           }});
  std::printf("best epoch %zu\n", hist.best_epoch);

  const std::size_t lead = lead_steps(ds, cfg.lead_hours);
  const auto times = sample_times(plan.test, lead);
  const auto fc = pooled_forecast(model, ds, times, 16, 1);
  const auto report = pipeline::score_forecast(fc.pooled, ds, cfg.target, times, lead);
  const auto truth = target_fields(ds, cfg.target, times, lead);

  std::printf("pooled RMSE        %.1f\n", report.weighted_rmse);
  std::printf("single member RMSE %.1f\n", weighted_rmse(fc.single_member, truth, ds.grid()));
  for (const auto& [name, rmse] : pipeline::baseline_rmses(ds, cfg.target, times, lead, plan.train))
    std::printf("%-18s %.1f\n", name.c_str(), rmse);
  std::printf("mean CRPS          %.1f\n", report.mean_crps);
  std::printf("spread             %.1f\n", spread_scalar(fc.expectation_variance, ds.grid()));
  return 0;
}
