#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "probcast/model/resnet.hpp"
#include "probcast/model/schedule.hpp"
#include "probcast/model/training.hpp"
#include "probcast/verification/weighted.hpp"
#include "support/toy.hpp"

using namespace probcast;
using probcast::tcheck::toy_world;

namespace {

ResNetConfig full_size_config() {
  ResNetConfig c;
  c.n_blocks = 1;
  c.inputs = {{"z", 500}, {"t", 850}};
  return c;
}

std::vector<double> scripted_run(const std::vector<double>& losses, TrainingSchedule s, std::vector<double>* lrs) {
  std::vector<double> seen;
  run_schedule(s, [&](std::size_t e, double lr) {
    lrs->push_back(lr);
    seen.push_back(losses[std::min(e, losses.size() - 1)]);
    return EpochLosses{0.0, seen.back()};
  });
  return seen;
}

}  // namespace

TEST(ResNetConfig, DefaultsAndValidation) {
  ResNetConfig c = full_size_config();
  EXPECT_EQ(c.effective_channels(), 100u);
  EXPECT_EQ(c.output_channels(), 100u);
  c.mode = OutputMode::continuous;
  EXPECT_EQ(c.effective_channels(), 64u);
  EXPECT_EQ(c.output_channels(), 1u);
  c.n_blocks = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = full_size_config();
  c.target = {"q", 700};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = full_size_config();
  c.kernel = 4;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(ResNetConfig, JsonRoundTrip) {
  ResNetConfig c = full_size_config();
  c.norm = NormKind::layer;
  c.dropout_rate = 0.0;
  const auto back = resnet_config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
}

TEST(BuildModel, ParameterCountMatchesLayerShapes) {
  const auto c = full_size_config();
  // proj 2->100 (5x5) + bias, block conv 100->100 + bias + gamma/beta, head 100->100 + bias
  const std::size_t expected = (2 * 100 * 25 + 100) + (100 * 100 * 25 + 100 + 200) + (100 * 100 * 25 + 100);
  EXPECT_EQ(resnet_parameter_count(c), expected);
  const auto m = ResNet<float>::build(c, 0);
  EXPECT_EQ(m.params.trainable_count(), expected);
}

TEST(BuildModel, SameSeedSameWeights) {
  const auto c = tcheck::toy_model();
  const auto a = ResNet<float>::build(c, 7), b = ResNet<float>::build(c, 7), d = ResNet<float>::build(c, 8);
  ASSERT_EQ(a.params.items().size(), b.params.items().size());
  bool differs = false;
  for (std::size_t i = 0; i < a.params.items().size(); ++i) {
    EXPECT_EQ(a.params.items()[i].var->value, b.params.items()[i].var->value);
    differs = differs || a.params.items()[i].var->value != d.params.items()[i].var->value;
  }
  EXPECT_TRUE(differs);
}

TEST(BuildModel, ZeroedResidualBranchIsSkipIdentity) {
  auto c = tcheck::toy_model();
  c.n_blocks = 3;
  for (NormKind norm : {NormKind::batch, NormKind::layer}) {
    c.norm = norm;
    auto m = ResNet<double>::build(c, 3);
    for (std::size_t i = 0; i < c.n_blocks; ++i) {
      const std::string b = "block" + std::to_string(i);
      m.params.at(b + ".norm.gamma")->value.fill(0.0);
      m.params.at(b + ".norm.beta")->value.fill(0.0);
    }
    Rng rng = make_rng(1);
    nn::Tensor<double> x({2, 2, 6, 8});
    for (double& v : x.data) v = standard_normal(rng);
    Rng drop = make_rng(2);
    const auto y = m.forward(x, {.train_norm = true, .dropout = true}, &drop);

    auto h = nn::leaky_relu(nn::conv2d(nn::constant(x), m.params.at("proj.weight"), m.params.at("proj.bias")), 0.3);
    const auto ref = nn::softmax(nn::conv2d(h, m.params.at("head.weight"), m.params.at("head.bias")));
    EXPECT_EQ(y->value, ref->value);
  }
}

TEST(BuildModel, OutputsAreDistributionsForAnyFiniteInput) {
  auto m = ResNet<float>::build(tcheck::toy_model(), 4);
  Rng rng = make_rng(5);
  for (float scale : {1e-3f, 1.0f, 1e3f}) {
    nn::Tensor<float> x({3, 2, 6, 8});
    for (float& v : x.data) v = scale * static_cast<float>(standard_normal(rng));
    const auto y = m.forward(x);
    const std::size_t pts = 48;
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t p = 0; p < pts; ++p) {
        double s = 0.0;
        for (std::size_t c = 0; c < 10; ++c) {
          const float v = y->value.data[(b * 10 + c) * pts + p];
          EXPECT_GE(v, 0.0f);
          s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-5);
      }
  }
}

TEST(BuildModel, RejectsWrongInputShape) {
  auto m = ResNet<float>::build(tcheck::toy_model(), 0);
  EXPECT_THROW(m.forward(nn::Tensor<float>({1, 3, 4, 4})), InvalidArgument);
}

TEST(Checkpointing, ModelRoundTrip) {
  const auto& w = toy_world();
  const auto path = std::filesystem::temp_directory_path() / "probcast_resnet_test.pwnn";
  w.model.save(path);
  auto back = ResNet<float>::load(path);
  std::filesystem::remove(path);
  EXPECT_EQ(config_to_json(back.config), config_to_json(w.model.config));
  ASSERT_TRUE(back.bins.has_value());
  EXPECT_EQ(*back.bins, *w.model.bins);
  EXPECT_EQ(back.input_stats.mean, w.model.input_stats.mean);
  for (std::size_t i = 0; i < back.params.items().size(); ++i)
    EXPECT_EQ(back.params.items()[i].var->value, w.model.params.items()[i].var->value);
}

TEST(Schedule, StagnationReducesThenStops) {
  TrainingSchedule s;
  s.initial_lr = 1.0;
  std::vector<double> lrs;
  scripted_run({5, 4, 4, 4, 4, 4, 4, 4, 4, 4}, s, &lrs);
  // epochs 0..6 run; reduction after epoch 3, again after epoch 5; stop after epoch 6
  ASSERT_EQ(lrs.size(), 7u);
  EXPECT_EQ(lrs, (std::vector<double>{1.0, 1.0, 1.0, 1.0, 0.2, 0.2, 0.04}));
}

TEST(Schedule, ImprovingRunsToMaxEpochs) {
  TrainingSchedule s;
  s.max_epochs = 12;
  std::vector<double> losses, lrs;
  for (int i = 0; i < 12; ++i) losses.push_back(10.0 - i);
  scripted_run(losses, s, &lrs);
  EXPECT_EQ(lrs.size(), 12u);
  for (double lr : lrs) EXPECT_EQ(lr, s.initial_lr);
}

TEST(Schedule, ControllerDecisions) {
  TrainingSchedule s;
  PlateauController c(s);
  EXPECT_TRUE(c.observe(5).improved);
  EXPECT_TRUE(c.observe(4).improved);
  EXPECT_FALSE(c.observe(4 - 1e-7).improved);  // below min_delta
  const auto d = c.observe(4);
  EXPECT_TRUE(d.reduce_lr);
  EXPECT_DOUBLE_EQ(c.lr(), s.initial_lr / 5.0);
}

TEST(Schedule, LrNonIncreasingAndDividedByFactor) {
  Rng rng = make_rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    TrainingSchedule s;
    s.max_epochs = 40;
    s.lr_patience_epochs = 1 + uniform_index(rng, 3);
    s.stop_patience_epochs = s.lr_patience_epochs + 1 + uniform_index(rng, 4);
    std::vector<double> losses, lrs;
    for (int i = 0; i < 40; ++i) losses.push_back(uniform(rng, 0.0, 1.0));
    scripted_run(losses, s, &lrs);
    for (std::size_t i = 1; i < lrs.size(); ++i) {
      EXPECT_LE(lrs[i], lrs[i - 1]);
      if (lrs[i] != lrs[i - 1]) {
        EXPECT_DOUBLE_EQ(lrs[i], lrs[i - 1] / s.lr_reduce_factor);
      }
    }
  }
}

TEST(Schedule, Validation) {
  TrainingSchedule s;
  s.lr_reduce_factor = 1.0;
  EXPECT_THROW(s.validate(), InvalidArgument);
  s = {};
  s.lr_patience_epochs = 0;
  EXPECT_THROW(s.validate(), InvalidArgument);
}

TEST(Training, BeatsUniformDensity) {
  const auto& w = toy_world();
  ASSERT_FALSE(w.history.epochs.empty());
  EXPECT_LT(w.history.epochs.back().train_loss, std::log(10.0));
  EXPECT_LT(w.history.best_val_loss(), std::log(10.0));
}

TEST(Training, HistoryShapeAndCsv) {
  const auto& h = toy_world().history;
  EXPECT_EQ(h.epochs.size(), 3u);
  for (std::size_t i = 0; i < h.epochs.size(); ++i) EXPECT_EQ(h.epochs[i].epoch, i);
  const auto csv = h.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,train_loss,val_loss,lr,seconds");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST(Training, RestoresBestEpochWeights) {
  auto w = toy_world();
  const std::size_t lead = lead_steps(w.ds, w.model.config.lead_hours);
  const auto times = sample_times(w.plan.neural_validation, lead);
  const auto tg = make_targets(w.model, w.ds, times, lead);
  const double v = evaluate_loss(w.model, w.ds, times, tg, 16);
  EXPECT_NEAR(v, w.history.best_val_loss(), 1e-9);
}

TEST(Training, Reproducible) {
  const auto a = tcheck::make_toy_world(0, 2), b = tcheck::make_toy_world(0, 2);
  EXPECT_EQ(a.history.to_csv(false), b.history.to_csv(false));
  for (std::size_t i = 0; i < a.model.params.items().size(); ++i)
    EXPECT_EQ(a.model.params.items()[i].var->value, b.model.params.items()[i].var->value);
}

TEST(Training, RejectsOverlappingRanges) {
  auto w = toy_world();
  EXPECT_THROW(train(w.model, w.ds, w.plan.train, w.plan.train, {.schedule = tcheck::toy_schedule(1)}), InvalidArgument);
}

TEST(Training, SampleTimesRespectLead) {
  const auto t = sample_times({10, 20}, 4);
  ASSERT_EQ(t.size(), 6u);
  EXPECT_EQ(t.front(), 10u);
  EXPECT_EQ(t.back(), 15u);
  EXPECT_TRUE(sample_times({10, 13}, 4).empty());
}

TEST(Predict, DeterministicWithoutDropoutAndNormalized) {
  auto w = toy_world();
  const auto times = sample_times(w.plan.test, 4);
  const std::span<const std::size_t> few(times.data(), 5);
  const auto a = predict_density(w.model, w.ds, few), b = predict_density(w.model, w.ds, few);
  ASSERT_EQ(a.size(), 5u);
  for (std::size_t s = 0; s < a.size(); ++s) {
    EXPECT_EQ(a[s].probs, b[s].probs);
    for (std::size_t q = 0; q < a[s].n_points(); ++q) {
      double sum = 0.0;
      for (std::size_t c = 0; c < a[s].n_bins(); ++c) sum += a[s].point(q)[c];
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
  }
}

TEST(Predict, DropoutStreamsDiffer) {
  auto w = toy_world();
  const auto times = sample_times(w.plan.test, 4);
  const std::span<const std::size_t> few(times.data(), 3);
  Rng r1 = make_rng(1, 10), r2 = make_rng(1, 11), r1b = make_rng(1, 10);
  const auto a = predict_density(w.model, w.ds, few, true, &r1);
  const auto b = predict_density(w.model, w.ds, few, true, &r2);
  const auto c = predict_density(w.model, w.ds, few, true, &r1b);
  double diff = 0.0;
  for (std::size_t i = 0; i < a[0].probs.size(); ++i) diff = std::max(diff, std::abs(a[0].probs[i] - b[0].probs[i]));
  EXPECT_GT(diff, 0.0);
  EXPECT_EQ(a[0].probs, c[0].probs);
}

TEST(Predict, ModeErrors) {
  auto w = toy_world();
  const std::size_t t[] = {0};
  EXPECT_THROW(predict_continuous(w.model, w.ds, t), ModeError);
  auto cont = prepare_model<float>(tcheck::toy_model(OutputMode::continuous), w.ds, w.plan.train, 0);
  EXPECT_THROW(predict_density(cont, w.ds, t), ModeError);
}

TEST(Predict, ContinuousZeroHeadGivesTrainingMean) {
  auto w = toy_world();
  auto cont = prepare_model<float>(tcheck::toy_model(OutputMode::continuous), w.ds, w.plan.train, 0);
  cont.params.at("head.weight")->value.fill(0.0f);
  const std::size_t t[] = {3, 4};
  const auto f = predict_continuous(cont, w.ds, t);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].n_lat, w.ds.grid().n_lat());
  EXPECT_EQ(f[0].n_lon, w.ds.grid().n_lon());
  for (double v : f[0].values) EXPECT_NEAR(v, cont.target_mean, 1e-6 * std::abs(cont.target_mean) + 1e-9);
}

TEST(Predict, ContinuousToyBeatsClimatology) {
  auto w = toy_world();
  auto cont = prepare_model<float>(tcheck::toy_model(OutputMode::continuous), w.ds, w.plan.train, 0);
  train(cont, w.ds, w.plan.train, w.plan.neural_validation, {.schedule = tcheck::toy_schedule(3), .seed = 0});
  const std::size_t lead = lead_steps(w.ds, 24);
  const auto times = sample_times(w.plan.test, lead);
  const auto pred = predict_continuous(cont, w.ds, times);
  const auto truth = target_fields(w.ds, {"z", 500}, times, lead);
  const Field clim = climatology(w.ds, {"z", 500}, w.plan.train);
  const std::vector<Field> climf(times.size(), clim);
  EXPECT_LT(weighted_rmse(pred, truth, w.ds.grid()), weighted_rmse(climf, truth, w.ds.grid()));
}
