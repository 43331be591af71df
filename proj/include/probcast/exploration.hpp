#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "probcast/ensemble.hpp"
#include "probcast/grid.hpp"
#include "probcast/model/training.hpp"
#include "probcast/verification/weighted.hpp"

namespace probcast {

/// One input-importance experiment: the base inputs plus a candidate
/// variable at a set of levels. An empty level set is the benchmark.
struct ExperimentSpec {
  std::string name;
  std::string candidate;
  std::vector<int> levels;
  std::vector<VariableId> base_inputs;
  ResNetConfig model;
  TrainingSchedule schedule;
  std::vector<std::uint64_t> seeds{0};
  std::size_t n_members = 32;

  std::vector<VariableId> extra_inputs() const {
    std::vector<VariableId> out;
    for (int l : levels) out.push_back({candidate, l});
    return out;
  }

  std::vector<VariableId> inputs() const {
    auto out = base_inputs;
    for (const auto& v : extra_inputs())
      if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    return out;
  }

  bool is_benchmark() const { return levels.empty(); }

  void validate(const Dataset& ds) const {
    detail::require(!base_inputs.empty(), "an experiment needs base inputs");
    detail::require(!seeds.empty(), "an experiment needs at least one seed");
    detail::require(n_members >= 1, "an experiment needs at least one ensemble member");
    for (const auto& v : base_inputs) detail::require(ds.has(v), "dataset lacks base input " + v.to_string());
    if (!is_benchmark()) detail::require(!candidate.empty(), "candidate variable name is empty");
    for (const auto& v : extra_inputs()) detail::require(ds.has(v), "dataset lacks level " + v.to_string());
  }
};

inline nlohmann::ordered_json to_json(const ExperimentSpec& s) {
  nlohmann::ordered_json j;
  j["name"] = s.name;
  j["candidate"] = s.candidate;
  j["levels"] = nlohmann::ordered_json::array();
  for (int l : s.levels) j["levels"].push_back(VariableId{"", l}.to_string().substr(1));
  j["base_inputs"] = nlohmann::ordered_json::array();
  for (const auto& v : s.base_inputs) j["base_inputs"].push_back(v.to_string());
  auto m = s.model;
  m.inputs = s.inputs();
  j["model"] = config_to_json(m);
  j["schedule"] = {{"initial_lr", s.schedule.initial_lr},
                   {"lr_reduce_factor", s.schedule.lr_reduce_factor},
                   {"lr_patience_epochs", s.schedule.lr_patience_epochs},
                   {"stop_patience_epochs", s.schedule.stop_patience_epochs},
                   {"max_epochs", s.schedule.max_epochs},
                   {"batch_size", s.schedule.batch_size},
                   {"min_delta", s.schedule.min_delta}};
  j["seeds"] = s.seeds;
  j["n_members"] = s.n_members;
  return j;
}

inline ExperimentSpec experiment_from_json(const nlohmann::ordered_json& j) {
  ExperimentSpec s;
  s.name = j.at("name").get<std::string>();
  s.candidate = j.at("candidate").get<std::string>();
  for (const auto& l : j.at("levels")) s.levels.push_back(VariableId::parse("x@" + l.get<std::string>()).level);
  for (const auto& v : j.at("base_inputs")) s.base_inputs.push_back(VariableId::parse(v.get<std::string>()));
  s.model = resnet_config_from_json(j.at("model"));
  s.model.inputs = s.inputs();
  const auto& c = j.at("schedule");
  s.schedule.initial_lr = c.at("initial_lr").get<double>();
  s.schedule.lr_reduce_factor = c.at("lr_reduce_factor").get<double>();
  s.schedule.lr_patience_epochs = c.at("lr_patience_epochs").get<std::size_t>();
  s.schedule.stop_patience_epochs = c.at("stop_patience_epochs").get<std::size_t>();
  s.schedule.max_epochs = c.at("max_epochs").get<std::size_t>();
  s.schedule.batch_size = c.at("batch_size").get<std::size_t>();
  s.schedule.min_delta = c.at("min_delta").get<double>();
  s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  s.n_members = j.at("n_members").get<std::size_t>();
  return s;
}

/// Result of training one experiment and scoring its pooled ensemble mean.
struct ExperimentOutcome {
  ExperimentSpec spec;
  MseInterval mse;
  double rmse = 0.0;
  std::vector<TrainHistory> histories;
};

/// Trains on plan.train (early stopping on plan.neural_validation), pools an
/// n_members dropout ensemble and scores the pooled expectation on
/// plan.stacked_validation. With several seeds the interval bounds and MSE
/// are seed averages.
inline ExperimentOutcome run_experiment(const Dataset& ds, const ExperimentSpec& spec, const SplitPlan& plan,
                                        std::size_t workers = thread_budget()) {
  spec.validate(ds);
  ResNetConfig cfg = spec.model;
  cfg.inputs = spec.inputs();
  cfg.mode = OutputMode::categorical;
  cfg.validate();
  const std::size_t lead = lead_steps(ds, cfg.lead_hours);
  const auto times = sample_times(plan.stacked_validation, lead);
  detail::require(!times.empty(), "evaluation split is shorter than the lead time");
  const auto truth = target_fields(ds, cfg.target, times, lead);

  ExperimentOutcome out;
  out.spec = spec;
  double rmse_sq = 0.0;
  for (std::uint64_t seed : spec.seeds) {
    auto model = prepare_model<float>(cfg, ds, plan.train, seed);
    TrainOptions opt;
    opt.schedule = spec.schedule;
    opt.seed = seed;
    opt.workers = workers;
    out.histories.push_back(train(model, ds, plan.train, plan.neural_validation, opt));
    const auto pf = pooled_forecast(model, ds, times, spec.n_members, seed, workers);
    const auto ci = weighted_mse_ci(pf.pooled_expectations(), truth, ds.grid());
    out.mse.mse += ci.mse;
    out.mse.lo += ci.lo;
    out.mse.hi += ci.hi;
    rmse_sq += ci.mse;
  }
  const double n = static_cast<double>(spec.seeds.size());
  out.mse.mse /= n;
  out.mse.lo /= n;
  out.mse.hi /= n;
  out.rmse = std::sqrt(rmse_sq / n);
  return out;
}

inline ExperimentOutcome run_benchmark(const Dataset& ds, ExperimentSpec spec, const SplitPlan& plan,
                                       std::size_t workers = thread_budget()) {
  spec.candidate.clear();
  spec.levels.clear();
  if (spec.name.empty()) spec.name = "benchmark";
  return run_experiment(ds, spec, plan, workers);
}

struct ImportanceRow {
  std::string name;
  std::string candidate;
  std::vector<int> levels;
  double mse = 0.0;
  double relative = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool benchmark = false;
  bool selected = false;

  std::size_t level_count() const { return levels.size(); }
};

/// 100 * candidate / benchmark for the MSE and both interval bounds; the
/// benchmark is treated as a constant.
inline ImportanceRow relative_row(const ExperimentOutcome& e, double benchmark_mse) {
  detail::require(benchmark_mse > 0.0, "benchmark MSE must be positive");
  const double s = 100.0 / benchmark_mse;
  ImportanceRow r;
  r.name = e.spec.name;
  r.candidate = e.spec.candidate;
  r.levels = e.spec.levels;
  r.mse = e.mse.mse;
  r.relative = s * e.mse.mse;
  r.lo = s * e.mse.lo;
  r.hi = s * e.mse.hi;
  r.benchmark = e.spec.is_benchmark();
  return r;
}

inline ImportanceRow run_candidate(const Dataset& ds, const ExperimentSpec& spec, const SplitPlan& plan,
                                   double benchmark_mse, std::size_t workers = thread_budget()) {
  detail::require(!spec.levels.empty(), "a candidate experiment needs a non-empty level set");
  return relative_row(run_experiment(ds, spec, plan, workers), benchmark_mse);
}

namespace detail {

inline bool overlaps(const ImportanceRow& a, const ImportanceRow& b) { return a.lo <= b.hi && b.lo <= a.hi; }

}  // namespace detail

/// Lowest relative error wins; among rows whose intervals overlap the
/// winner's, the smallest level set is preferred, then the lower error, then
/// the lexicographically smaller level list.
inline std::size_t select_optimum(const std::vector<ImportanceRow>& rows) {
  detail::require(!rows.empty(), "select_optimum needs at least one row");
  auto key_less = [&](std::size_t a, std::size_t b) {
    const auto& x = rows[a];
    const auto& y = rows[b];
    if (x.relative != y.relative) return x.relative < y.relative;
    if (x.levels != y.levels) return x.levels < y.levels;
    return x.name < y.name;
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (key_less(i, best)) best = i;
  std::size_t pick = best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!detail::overlaps(rows[i], rows[best])) continue;
    const auto& x = rows[i];
    const auto& y = rows[pick];
    if (x.level_count() != y.level_count()) {
      if (x.level_count() < y.level_count()) pick = i;
    } else if (key_less(i, pick)) {
      pick = i;
    }
  }
  return pick;
}

struct ImportanceReport {
  double benchmark_mse = 0.0;
  std::vector<ImportanceRow> rows;

  std::string to_csv() const {
    std::string out = "name,candidate,levels,level_count,mse,relative_pct,ci_lo_pct,ci_hi_pct,benchmark,selected\n";
    char buf[256];
    for (const auto& r : rows) {
      std::string lv;
      for (std::size_t i = 0; i < r.levels.size(); ++i)
        lv += (i ? ";" : "") + VariableId{"", r.levels[i]}.to_string().substr(1);
      std::snprintf(buf, sizeof buf, ",%zu,%.9g,%.6f,%.6f,%.6f,%d,%d\n", r.level_count(), r.mse, r.relative, r.lo,
                    r.hi, r.benchmark ? 1 : 0, r.selected ? 1 : 0);
      out += r.name + "," + r.candidate + "," + lv + buf;
    }
    return out;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["benchmark_mse"] = benchmark_mse;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : rows)
      j["rows"].push_back({{"name", r.name},
                           {"candidate", r.candidate},
                           {"levels", r.levels},
                           {"level_count", r.level_count()},
                           {"mse", r.mse},
                           {"relative_pct", r.relative},
                           {"ci_lo_pct", r.lo},
                           {"ci_hi_pct", r.hi},
                           {"benchmark", r.benchmark},
                           {"selected", r.selected}});
    return j;
  }
};

/// Benchmark plus every candidate; candidates run concurrently. The
/// selected flag marks select_optimum over the candidate rows.
inline ImportanceReport explore_inputs(const Dataset& ds, const ExperimentSpec& benchmark,
                                       const std::vector<ExperimentSpec>& candidates, const SplitPlan& plan,
                                       std::size_t workers = thread_budget()) {
  ImportanceReport rep;
  const auto bench = run_benchmark(ds, benchmark, plan, workers);
  rep.benchmark_mse = bench.mse.mse;
  rep.rows.push_back(relative_row(bench, rep.benchmark_mse));
  std::vector<ExperimentOutcome> outs(candidates.size());
  const std::size_t outer = std::max<std::size_t>(1, std::min(workers, candidates.size()));
  parallel_for(
      candidates.size(),
      [&](std::size_t i) {
        detail::require(!candidates[i].levels.empty(), "a candidate experiment needs a non-empty level set");
        outs[i] = run_experiment(ds, candidates[i], plan, std::max<std::size_t>(1, workers / outer));
      },
      outer);
  std::vector<ImportanceRow> cand;
  for (const auto& o : outs) cand.push_back(relative_row(o, rep.benchmark_mse));
  if (!cand.empty()) cand[select_optimum(cand)].selected = true;
  rep.rows.insert(rep.rows.end(), cand.begin(), cand.end());
  return rep;
}

/// Records every experiment for exact re-runs.
inline nlohmann::ordered_json exploration_manifest(const ExperimentSpec& benchmark,
                                                   const std::vector<ExperimentSpec>& candidates,
                                                   const SplitPlan& plan) {
  nlohmann::ordered_json j;
  auto range = [](TimeRange r) { return nlohmann::ordered_json{{"begin", r.begin}, {"end", r.end}}; };
  j["split"] = {{"train", range(plan.train)},
                {"neural_validation", range(plan.neural_validation)},
                {"stacked_validation", range(plan.stacked_validation)},
                {"test", range(plan.test)}};
  j["benchmark"] = to_json(benchmark);
  j["candidates"] = nlohmann::ordered_json::array();
  for (const auto& c : candidates) j["candidates"].push_back(to_json(c));
  return j;
}

/// Copy of the dataset with `id` holding the target at t + lead (the last
/// lead steps repeat the final field).
inline Dataset add_leak_variable(const Dataset& ds, const VariableId& target, std::size_t lead, const VariableId& id) {
  const std::size_t v = ds.index_of(target), pts = ds.grid().size(), n = ds.n_time();
  std::vector<float> data(n * pts);
  for (std::size_t t = 0; t < n; ++t) {
    const auto s = ds.slice(std::min(t + lead, n - 1), v);
    std::copy(s.begin(), s.end(), data.begin() + static_cast<std::ptrdiff_t>(t * pts));
  }
  return ds.with_variable(id, data);
}

struct BlockRow {
  std::size_t n_blocks = 0;
  double rmse = 0.0;
  bool selected = false;
};

/// Index of the lowest RMSE; ties go to fewer blocks.
inline std::size_t select_blocks(const std::vector<BlockRow>& rows) {
  detail::require(!rows.empty(), "block sweep needs at least one row");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].rmse < rows[best].rmse || (rows[i].rmse == rows[best].rmse && rows[i].n_blocks < rows[best].n_blocks))
      best = i;
  return best;
}

inline std::vector<BlockRow> sweep_blocks(const Dataset& ds, const ExperimentSpec& spec,
                                          const std::vector<std::size_t>& blocks, const SplitPlan& plan,
                                          std::size_t workers = thread_budget()) {
  detail::require(!blocks.empty(), "block list must not be empty");
  std::vector<BlockRow> rows(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    ExperimentSpec s = spec;
    s.model.n_blocks = blocks[i];
    s.name = spec.name + "_blocks" + std::to_string(blocks[i]);
    rows[i] = {blocks[i], run_experiment(ds, s, plan, workers).rmse, false};
  }
  rows[select_blocks(rows)].selected = true;
  return rows;
}

inline std::string blocks_to_csv(const std::vector<BlockRow>& rows) {
  std::string out = "n_blocks,rmse,selected\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%d\n", r.n_blocks, r.rmse, r.selected ? 1 : 0);
    out += buf;
  }
  return out;
}

}  // namespace probcast
