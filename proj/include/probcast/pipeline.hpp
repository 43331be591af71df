#pragma once

// On-disk pipeline: each stage reads the artifacts of the previous one from
// the output directory.
//   <out>/dataset.gfb1                 synth
//   <out>/<learner>.pwnn               train (+ _history.csv)
//   <out>/<learner>.<part>.gfd1        ensemble, part = stackval | test
//   <out>/stack.pwnn, stack.test.gfd1  stack
//   <out>/report.json, report.txt      evaluate

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "probcast/ensemble.hpp"
#include "probcast/io/density_file.hpp"
#include "probcast/io/gfb1.hpp"
#include "probcast/model/training.hpp"
#include "probcast/stacking.hpp"
#include "probcast/synth.hpp"
#include "probcast/verification/contours.hpp"
#include "probcast/verification/report.hpp"
#include "probcast/verification/scores.hpp"
#include "probcast/verification/weighted.hpp"

namespace probcast::pipeline {

namespace fs = std::filesystem;

enum class Part { stackval, test };

inline std::string to_string(Part p) { return p == Part::stackval ? "stackval" : "test"; }

inline TimeRange part_range(const SplitPlan& plan, Part p) {
  return p == Part::stackval ? plan.stacked_validation : plan.test;
}

inline fs::path dataset_path(const fs::path& out) { return out / "dataset.gfb1"; }
inline fs::path learner_path(const fs::path& out, const std::string& name) { return out / (name + ".pwnn"); }
inline fs::path forecast_path(const fs::path& out, const std::string& name, Part p) {
  return out / (name + "." + to_string(p) + ".gfd1");
}

/// Parses "0.6,0.1,0.15,0.15".
inline SplitFractions parse_split(const std::string& text) {
  std::vector<double> v;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      detail::require(used == item.size(), "");
    } catch (...) {
      throw InvalidArgument("bad split fraction '" + item + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  detail::require(v.size() == 4, "split needs four fractions: train,neural_validation,stacked_validation,test");
  return {v[0], v[1], v[2], v[3]};
}

inline void ensure_dir(const fs::path& out) {
  detail::require(!out.empty(), "output directory is empty");
  fs::create_directories(out);
}

inline Dataset synth_stage(const SynthConfig& cfg, std::uint64_t seed, const fs::path& out) {
  ensure_dir(out);
  Dataset ds = synth_generate(cfg, seed);
  io::save_dataset(ds, dataset_path(out));
  return ds;
}

struct LearnerSpec {
  std::string name = "learner";
  ResNetConfig model;
  TrainingSchedule schedule;
  std::uint64_t seed = 0;
};

struct TrainedLearner {
  ResNet<float> model;
  TrainHistory history;
};

inline TrainedLearner train_stage(const Dataset& ds, const SplitPlan& plan, const LearnerSpec& spec,
                                  const fs::path& out, std::size_t workers = thread_budget()) {
  ensure_dir(out);
  TrainedLearner r{prepare_model<float>(spec.model, ds, plan.train, spec.seed), {}};
  TrainOptions opt;
  opt.schedule = spec.schedule;
  opt.seed = spec.seed;
  opt.workers = workers;
  r.history = train(r.model, ds, plan.train, plan.neural_validation, opt);
  r.model.save(learner_path(out, spec.name));
  io::write_text(out / (spec.name + "_history.csv"), r.history.to_csv(false));
  return r;
}

struct LearnerForecast {
  std::string name;
  Part part = Part::test;
  PooledForecast forecast;
  double spread = 0.0;
  double single_member_rmse = 0.0;
  double pooled_rmse = 0.0;
};

/// Pooled forecasts of one learner on the stacked-validation and test
/// splits, written as density files.
inline std::vector<LearnerForecast> ensemble_stage(ResNet<float>& model, const std::string& name, const Dataset& ds,
                                                   const SplitPlan& plan, std::size_t n_members,
                                                   std::uint64_t master_seed, const fs::path& out,
                                                   std::size_t workers = thread_budget()) {
  ensure_dir(out);
  const std::size_t lead = lead_steps(ds, model.config.lead_hours);
  std::vector<LearnerForecast> result;
  for (Part p : {Part::stackval, Part::test}) {
    const auto times = sample_times(part_range(plan, p), lead);
    detail::require(!times.empty(), "split " + to_string(p) + " is shorter than the lead time");
    LearnerForecast lf;
    lf.name = name;
    lf.part = p;
    lf.forecast = pooled_forecast(model, ds, times, n_members, master_seed, workers);
    const auto truth = target_fields(ds, model.config.target, times, lead);
    lf.pooled_rmse = weighted_rmse(lf.forecast.pooled_expectations(), truth, ds.grid());
    lf.single_member_rmse = weighted_rmse(lf.forecast.single_member, truth, ds.grid());
    lf.spread = spread_scalar(lf.forecast.expectation_variance, ds.grid());
    nlohmann::ordered_json info;
    info["learner"] = name;
    info["part"] = to_string(p);
    info["target"] = model.config.target.to_string();
    info["lead_hours"] = model.config.lead_hours;
    info["n_members"] = n_members;
    info["master_seed"] = master_seed;
    info["member_streams"] = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < n_members; ++k) info["member_streams"].push_back(k);
    info["spread"] = lf.spread;
    info["single_member_rmse"] = lf.single_member_rmse;
    info["pooled_rmse"] = lf.pooled_rmse;
    io::save_densities({lf.forecast.times, lf.forecast.lead, lf.forecast.pooled}, forecast_path(out, name, p), info);
    result.push_back(std::move(lf));
  }
  return result;
}

/// A saved forecast with the metadata of its manifest.
struct SavedForecast {
  io::DensityFile file;
  nlohmann::ordered_json info;

  std::vector<Field> expectations() const {
    std::vector<Field> out;
    for (const auto& d : file.densities) out.push_back(expectation(d));
    return out;
  }
};

inline SavedForecast load_forecast(const fs::path& path) {
  SavedForecast f{io::load_densities(path), {}};
  const auto mp = io::manifest_path(path);
  if (fs::exists(mp)) {
    try {
      const auto j = nlohmann::ordered_json::parse(io::read_text(mp));
      if (j.contains("info")) f.info = j.at("info");
    } catch (const nlohmann::json::exception& e) {
      throw DecodeError(mp.string() + ": " + e.what());
    }
  }
  return f;
}

inline std::vector<std::int32_t> true_bins(const Dataset& ds, const VariableId& target, std::span<const std::size_t> times,
                                           std::size_t lead, const BinSpec& spec) {
  std::vector<std::int32_t> out;
  const std::size_t v = ds.index_of(target);
  for (std::size_t t : times)
    for (float x : ds.slice(t + lead, v)) out.push_back(static_cast<std::int32_t>(spec.bin_of(x)));
  return out;
}

struct StackStageResult {
  StackModel model;
  StackTrainResult training;
  std::vector<DensityGrid> test_densities;
  std::vector<std::size_t> test_times;
  double train_rows_rmse = 0.0;
};

inline StackStageResult stack_stage(const Dataset& ds, const std::vector<std::string>& learners, const StackConfig& cfg,
                                    std::uint64_t seed, const fs::path& out) {
  detail::require(!learners.empty(), "stacking needs at least one learner");
  std::vector<LearnerOutput> train_in, test_in;
  std::optional<SavedForecast> first;
  VariableId target;
  for (const auto& name : learners) {
    auto sv = load_forecast(forecast_path(out, name, Part::stackval));
    auto te = load_forecast(forecast_path(out, name, Part::test));
    if (!first) {
      first = sv;
      target = VariableId::parse(sv.info.value("target", std::string("z@500")));
    } else {
      detail::require(sv.file.times == first->file.times && sv.file.lead == first->file.lead,
                      "learner " + name + " covers different samples");
    }
    train_in.push_back({name, sv.expectations()});
    test_in.push_back({name, te.expectations()});
  }
  const BinSpec spec = first->file.densities.front().spec;
  const auto tab = assemble_stack_inputs(train_in, ds.grid(), cfg.latitude_feature);
  const auto bins = true_bins(ds, target, first->file.times, first->file.lead, spec);
  StackStageResult r{StackModel::build(cfg, spec, tab.names, seed), {}, {}, {}, 0.0};
  r.training = train_stack(r.model, tab, bins, seed);
  r.model.save(out / "stack.pwnn");
  io::write_text(out / "stack_history.csv", r.training.history.to_csv(false));

  std::vector<Field> stack_train;
  for (const auto& d : stack_predict(r.model, tab, ds.grid())) stack_train.push_back(expectation(d));
  r.train_rows_rmse =
      weighted_rmse(stack_train, target_fields(ds, target, first->file.times, first->file.lead), ds.grid());

  const auto test = load_forecast(forecast_path(out, learners.front(), Part::test));
  r.test_times = test.file.times;
  r.test_densities = stack_predict(r.model, assemble_stack_inputs(test_in, ds.grid(), cfg.latitude_feature), ds.grid());
  nlohmann::ordered_json info;
  info["learner"] = "stack";
  info["part"] = "test";
  info["target"] = target.to_string();
  info["learners"] = learners;
  info["seed"] = seed;
  info["train_rows_rmse"] = r.train_rows_rmse;
  io::save_densities({r.test_times, test.file.lead, r.test_densities}, forecast_path(out, "stack", Part::test), info);
  return r;
}

/// Verification of densities against the truth at t + lead.
inline ScoreReport score_forecast(const std::vector<DensityGrid>& densities, const Dataset& ds, const VariableId& target,
                                  std::span<const std::size_t> times, std::size_t lead) {
  detail::require(densities.size() == times.size(), "one density per sample");
  const auto truth = target_fields(ds, target, times, lead);
  std::vector<Field> mu;
  for (const auto& d : densities) mu.push_back(expectation(d, target));
  ScoreReport r;
  r.variable = target.to_string();
  r.lead_hours = static_cast<std::int64_t>(lead) * ds.step_hours();
  r.n_samples = densities.size();
  r.weighted_rmse = weighted_rmse(mu, truth, ds.grid());
  r.mse = weighted_mse_ci(mu, truth, ds.grid());
  r.mean_crps = mean_crps(densities, truth);
  r.coverage = coverage_stats(densities, truth);
  std::vector<CategoricalField> cats;
  for (const auto& f : truth) cats.push_back(discretize(f, densities.front().spec));
  for (std::size_t k = 1; k <= std::min<std::size_t>(5, densities.front().n_bins()); ++k)
    r.topk.push_back(topk_match(densities, cats, k));
  return r;
}

/// Persistence and train-split climatology RMSE on the same samples.
inline std::vector<std::pair<std::string, double>> baseline_rmses(const Dataset& ds, const VariableId& target,
                                                                  std::span<const std::size_t> times, std::size_t lead,
                                                                  TimeRange climatology_range) {
  const auto truth = target_fields(ds, target, times, lead);
  const std::size_t v = ds.index_of(target);
  std::vector<Field> pers, clim(times.size(), climatology(ds, target, climatology_range));
  for (std::size_t t : times) pers.push_back(ds.field(t, v));
  return {{"persistence", weighted_rmse(pers, truth, ds.grid())}, {"climatology", weighted_rmse(clim, truth, ds.grid())}};
}

/// Scores `forecast` (a density file) on its samples and appends baselines:
/// persistence, climatology, each learner's pooled forecast and their
/// simple average.
inline ScoreReport evaluate_stage(const Dataset& ds, const SplitPlan& plan, const fs::path& forecast,
                                  const std::vector<fs::path>& learner_forecasts, bool with_fixtures = true) {
  const auto f = load_forecast(forecast);
  detail::require(!f.file.densities.empty(), "forecast file holds no samples");
  const VariableId target = VariableId::parse(f.info.value("target", std::string("z@500")));
  ScoreReport r = score_forecast(f.file.densities, ds, target, f.file.times, f.file.lead);
  r.forecast = f.info.value("learner", forecast.stem().string());
  r.n_members = f.info.value("n_members", std::size_t{0});
  if (f.info.contains("spread")) {
    r.spread = f.info.at("spread").get<double>();
    if (r.weighted_rmse > 0.0) r.spread_skill = spread_skill_ratio(*r.spread, r.weighted_rmse);
  }
  r.baselines = baseline_rmses(ds, target, f.file.times, f.file.lead, plan.train);
  if (f.info.contains("single_member_rmse")) r.baselines.emplace_back("single member", f.info.at("single_member_rmse").get<double>());
  std::vector<LearnerOutput> learners;
  const auto truth = target_fields(ds, target, f.file.times, f.file.lead);
  for (const auto& p : learner_forecasts) {
    const auto lf = load_forecast(p);
    detail::require(lf.file.times == f.file.times, "learner forecast " + p.string() + " covers different samples");
    learners.push_back({lf.info.value("learner", p.stem().string()), lf.expectations()});
    r.baselines.emplace_back("learner " + learners.back().id, weighted_rmse(learners.back().expectations, truth, ds.grid()));
  }
  if (learners.size() >= 2) r.baselines.emplace_back("average of learners", weighted_rmse(average_combine(learners), truth, ds.grid()));
  if (with_fixtures) r.fixtures = published_fixtures();
  return r;
}

inline void write_report(const ScoreReport& r, const fs::path& out) {
  ensure_dir(out);
  io::write_text(out / "report.json", to_json(r).dump(2) + "\n");
  io::write_text(out / "report.txt", render_report(r));
}

struct ContourOutputs {
  std::vector<Polyline> lines;
  ThresholdMap threshold;
};

/// Threshold probability map of one sample and its isolines.
inline ContourOutputs contours_stage(const Dataset& ds, const fs::path& forecast, std::size_t sample, double threshold,
                                     const std::vector<double>& levels, const fs::path& out) {
  ensure_dir(out);
  const auto f = load_forecast(forecast);
  detail::require(sample < f.file.densities.size(), "sample index out of range");
  ContourOutputs c{{}, cdf_threshold(f.file.densities[sample], threshold)};
  c.lines = probability_contours(c.threshold.probability, ds.grid(), levels);
  io::write_text(out / "contours.csv", contours_to_csv(c.lines));
  io::write_text(out / "contours.svg", contours_to_svg(c.lines, ds.grid(), &c.threshold.probability));
  std::string grid_csv = "lat,lon,probability\n";
  char buf[96];
  for (std::size_t j = 0; j < ds.grid().n_lat(); ++j)
    for (std::size_t k = 0; k < ds.grid().n_lon(); ++k) {
      std::snprintf(buf, sizeof buf, "%.6g,%.6g,%.9g\n", ds.grid().latitudes_deg[j], ds.grid().longitudes_deg[k],
                    c.threshold.probability.at(j, k));
      grid_csv += buf;
    }
  io::write_text(out / "threshold.csv", grid_csv);
  return c;
}

}  // namespace probcast::pipeline
