// probcast command-line front end.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "probcast/probcast.hpp"

namespace fs = std::filesystem;
using namespace probcast;
namespace pl = probcast::pipeline;

namespace {

struct Common {
  std::string out;
  std::string data;
  std::uint64_t seed = 0;
  std::string split = "0.6,0.1,0.15,0.15";
  std::size_t workers = thread_budget();

  fs::path data_path() const { return data.empty() ? pl::dataset_path(out) : fs::path(data); }
  Dataset load() const { return io::load_dataset(data_path()); }
  SplitPlan plan(const Dataset& ds) const { return SplitPlan::chronological(ds.n_time(), pl::parse_split(split)); }
};

void add_out(CLI::App* c, Common& o) {
  c->add_option("--out", o.out, "Output directory (artifacts of earlier stages are read from here)")->required();
}

void add_data(CLI::App* c, Common& o) {
  c->add_option("--data", o.data, "GFB1 dataset (default <out>/dataset.gfb1)");
  c->add_option("--split", o.split, "Chronological split fractions train,neural_val,stacked_val,test")
      ->capture_default_str();
}

void add_seed(CLI::App* c, Common& o) { c->add_option("--seed", o.seed, "Random seed")->capture_default_str(); }

void add_workers(CLI::App* c, Common& o) {
  c->add_option("--workers", o.workers, "Parallel workers for batch evaluation (PROBCAST_THREADS caps the default)")
      ->check(CLI::PositiveNumber);
}

std::vector<VariableId> parse_vars(const std::vector<std::string>& v) {
  std::vector<VariableId> out;
  for (const auto& s : v) out.push_back(VariableId::parse(s));
  return out;
}

std::vector<int> parse_levels(const std::string& text) {
  std::vector<int> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    out.push_back(VariableId::parse("x@" + text.substr(pos, comma - pos)).level);
    pos = comma + 1;
  }
  detail::require(!out.empty(), "empty level set");
  return out;
}

struct ModelFlags {
  std::vector<std::string> inputs{"z@500", "t@850"};
  std::string target = "z@500";
  std::size_t blocks = 5;
  std::size_t channels = 0;
  std::size_t kernel = 5;
  std::size_t bins = 100;
  std::int64_t lead_hours = 72;
  double dropout = 0.1;
  std::string norm = "batch";
  std::size_t epochs = 100;
  double lr = 5e-5;
  std::size_t batch = 32;

  ResNetConfig config() const {
    ResNetConfig c;
    c.inputs = parse_vars(inputs);
    c.target = VariableId::parse(target);
    c.n_blocks = blocks;
    c.channels = channels;
    c.kernel = kernel;
    c.n_bins = bins;
    c.lead_hours = lead_hours;
    c.dropout_rate = dropout;
    c.norm = norm == "layer" ? NormKind::layer : NormKind::batch;
    c.validate();
    return c;
  }

  TrainingSchedule schedule() const {
    TrainingSchedule s;
    s.initial_lr = lr;
    s.max_epochs = epochs;
    s.batch_size = batch;
    return s;
  }
};

void add_model(CLI::App* c, ModelFlags& m) {
  c->add_option("--inputs", m.inputs, "Input variables, e.g. z@500,t@850")->delimiter(',')->capture_default_str();
  c->add_option("--target", m.target, "Target variable (z@<hPa> or t@<hPa>)")->capture_default_str();
  c->add_option("--blocks", m.blocks, "Residual blocks")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--channels", m.channels, "Conv channels (0: 100 categorical)")->capture_default_str();
  c->add_option("--kernel", m.kernel, "Odd conv kernel size")->capture_default_str();
  c->add_option("--bins", m.bins, "Number of target bins")->check(CLI::Range(2, 65535))->capture_default_str();
  c->add_option("--lead-hours", m.lead_hours, "Forecast lead time in hours")->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  c->add_option("--dropout", m.dropout, "Dropout rate (0 disables dropout)")->check(CLI::Range(0.0, 0.99))
      ->capture_default_str();
  c->add_option("--norm", m.norm, "Normalization: batch or layer")->check(CLI::IsMember({"batch", "layer"}))
      ->capture_default_str();
  c->add_option("--epochs", m.epochs, "Maximum epochs")->capture_default_str();
  c->add_option("--lr", m.lr, "Initial learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--batch", m.batch, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic gridded forecasting with residual networks, dropout ensembles and stacking"};
  app.require_subcommand(1);

  Common so;
  SynthConfig sc;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic GFB1 dataset");
  add_out(synth, so);
  add_seed(synth, so);
  synth->add_option("--nlat", sc.n_lat, "Latitude rows")->check(CLI::Range(2, 4096))->capture_default_str();
  synth->add_option("--nlon", sc.n_lon, "Longitude columns")->check(CLI::Range(2, 8192))->capture_default_str();
  synth->add_option("--steps", sc.n_steps, "Time steps")->check(CLI::Range(1, 10000000))->capture_default_str();
  synth->add_option("--step-hours", sc.step_hours, "Hours per step")->check(CLI::Range(1, 24 * 365))
      ->capture_default_str();
  synth->add_option("--levels", sc.levels, "Pressure levels in hPa")->delimiter(',')->capture_default_str();
  synth->add_option("--noise", sc.noise, "Relative per-level noise")->check(CLI::NonNegativeNumber)
      ->capture_default_str();

  Common to;
  ModelFlags tm;
  std::string tname = "learner";
  auto* trn = app.add_subcommand("train", "Train one categorical ResNet learner");
  add_out(trn, to);
  add_data(trn, to);
  add_seed(trn, to);
  add_workers(trn, to);
  add_model(trn, tm);
  trn->add_option("--name", tname, "Learner name")->capture_default_str();

  Common eo;
  std::string ename = "learner", emodel;
  std::size_t members = 32;
  auto* ens = app.add_subcommand("ensemble", "Pooled dropout ensembles of a learner on the stacked-validation and test splits");
  add_out(ens, eo);
  add_data(ens, eo);
  add_seed(ens, eo);
  add_workers(ens, eo);
  ens->add_option("--name", ename, "Learner name")->capture_default_str();
  ens->add_option("--model", emodel, "Checkpoint (default <out>/<name>.pwnn)");
  ens->add_option("--members", members, "Ensemble members")->check(CLI::Range(1, 100000))->capture_default_str();

  Common ko;
  std::vector<std::string> klearners;
  StackConfig kc;
  auto* stk = app.add_subcommand("stack", "Train the stacked meta-learner on learner forecasts");
  add_out(stk, ko);
  add_data(stk, ko);
  add_seed(stk, ko);
  stk->add_option("--learners", klearners, "Learner names")->delimiter(',')->required();
  stk->add_option("--epochs", kc.schedule.max_epochs, "Maximum epochs")->capture_default_str();
  stk->add_option("--lr", kc.schedule.initial_lr, "Initial learning rate")->check(CLI::PositiveNumber)
      ->capture_default_str();
  stk->add_option("--batch", kc.schedule.batch_size, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
  stk->add_option("--hidden", kc.hidden_layers, "Hidden layers")->check(CLI::PositiveNumber)->capture_default_str();
  stk->add_option("--width", kc.hidden_width, "Hidden width")->check(CLI::PositiveNumber)->capture_default_str();
  stk->add_flag("--latitude-feature", kc.latitude_feature, "Add latitude as a stack feature");

  Common vo;
  std::string vforecast;
  std::vector<std::string> vlearners;
  bool no_fixtures = false;
  auto* evl = app.add_subcommand("evaluate", "Score a forecast file and write report.json / report.txt");
  add_out(evl, vo);
  add_data(evl, vo);
  evl->add_option("--forecast", vforecast, "Density file (default <out>/stack.test.gfd1)");
  evl->add_option("--learners", vlearners, "Learner names to compare against")->delimiter(',');
  evl->add_flag("--no-fixtures", no_fixtures, "Omit the published reference values");

  Common xo;
  ModelFlags xm;
  std::string candidate;
  std::vector<std::string> level_sets;
  std::vector<std::size_t> sweep;
  std::size_t xmembers = 32, n_seeds = 1;
  auto* exp = app.add_subcommand("explore", "Input-importance experiments relative to a benchmark");
  add_out(exp, xo);
  add_data(exp, xo);
  add_seed(exp, xo);
  add_workers(exp, xo);
  add_model(exp, xm);
  exp->add_option("--candidate", candidate, "Candidate variable name, e.g. q");
  exp->add_option("--levels", level_sets, "Level sets separated by ';', e.g. '500,850;250'")->delimiter(';');
  exp->add_option("--sweep-blocks", sweep, "Residual-block counts to sweep")->delimiter(',');
  exp->add_option("--members", xmembers, "Ensemble members")->check(CLI::Range(1, 100000))->capture_default_str();
  exp->add_option("--seeds", n_seeds, "Seeds averaged per experiment (seed, seed+1, ...)")
      ->check(CLI::Range(1, 1000))->capture_default_str();

  Common co;
  std::string cforecast;
  std::size_t sample = 0;
  double threshold = 0.0;
  std::vector<double> clevels{0.1, 0.5, 0.9};
  auto* con = app.add_subcommand("contours", "Probability of falling below a threshold, with isolines");
  add_out(con, co);
  add_data(con, co);
  con->add_option("--forecast", cforecast, "Density file (default <out>/stack.test.gfd1)");
  con->add_option("--sample", sample, "Sample index within the forecast file")->capture_default_str();
  con->add_option("--threshold", threshold, "Threshold value in target units")->required();
  con->add_option("--contour-levels", clevels, "Probability levels")->delimiter(',')->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const auto ds = pl::synth_stage(sc, so.seed, so.out);
      std::printf("dataset %s: %zu x %zu grid, %zu steps of %u h, %zu variables\n",
                  pl::dataset_path(so.out).string().c_str(), ds.grid().n_lat(), ds.grid().n_lon(), ds.n_time(),
                  ds.step_hours(), ds.n_var());
    } else if (*trn) {
      const auto ds = to.load();
      pl::LearnerSpec spec{tname, tm.config(), tm.schedule(), to.seed};
      const auto r = pl::train_stage(ds, to.plan(ds), spec, to.out, to.workers);
      std::printf("learner %s: %zu epochs, best validation loss %.6g at epoch %zu\n", tname.c_str(),
                  r.history.epochs.size(), r.history.best_val_loss(), r.history.best_epoch);
    } else if (*ens) {
      const auto ds = eo.load();
      auto model = ResNet<float>::load(emodel.empty() ? pl::learner_path(eo.out, ename) : fs::path(emodel));
      const auto fc = pl::ensemble_stage(model, ename, ds, eo.plan(ds), members, eo.seed, eo.out, eo.workers);
      for (const auto& f : fc)
        std::printf("%s %s: pooled RMSE %.6g, single-member RMSE %.6g, spread %.6g\n", ename.c_str(),
                    pl::to_string(f.part).c_str(), f.pooled_rmse, f.single_member_rmse, f.spread);
    } else if (*stk) {
      const auto ds = ko.load();
      const auto r = pl::stack_stage(ds, klearners, kc, ko.seed, ko.out);
      std::printf("stack: %zu epochs, training-rows RMSE %.6g%s\n", r.training.history.epochs.size(), r.train_rows_rmse,
                  r.training.single_class ? " (warning: single-class targets)" : "");
    } else if (*evl) {
      const auto ds = vo.load();
      std::vector<fs::path> lf;
      for (const auto& n : vlearners) lf.push_back(pl::forecast_path(vo.out, n, pl::Part::test));
      const fs::path fc = vforecast.empty() ? pl::forecast_path(vo.out, "stack", pl::Part::test) : fs::path(vforecast);
      const auto rep = pl::evaluate_stage(ds, vo.plan(ds), fc, lf, !no_fixtures);
      pl::write_report(rep, vo.out);
      std::printf("%s %s: weighted RMSE %.6g, mean CRPS %.6g\n", rep.forecast.c_str(), rep.variable.c_str(),
                  rep.weighted_rmse, rep.mean_crps);
    } else if (*exp) {
      const auto ds = xo.load();
      const auto plan = xo.plan(ds);
      ExperimentSpec bench;
      bench.name = "benchmark";
      bench.base_inputs = parse_vars(xm.inputs);
      bench.model = xm.config();
      bench.schedule = xm.schedule();
      bench.n_members = xmembers;
      bench.seeds.clear();
      for (std::size_t i = 0; i < n_seeds; ++i) bench.seeds.push_back(xo.seed + i);
      pl::ensure_dir(xo.out);
      if (!sweep.empty()) {
        const auto rows = sweep_blocks(ds, bench, sweep, plan, xo.workers);
        io::write_text(fs::path(xo.out) / "blocks.csv", blocks_to_csv(rows));
        for (const auto& r : rows)
          std::printf("blocks %zu: RMSE %.6g%s\n", r.n_blocks, r.rmse, r.selected ? "  <- selected" : "");
      }
      if (!level_sets.empty()) {
        detail::require(!candidate.empty(), "--levels needs --candidate");
        std::vector<ExperimentSpec> cands;
        for (const auto& ls : level_sets) {
          ExperimentSpec c = bench;
          c.candidate = candidate;
          c.levels = parse_levels(ls);
          c.name = candidate + "@" + ls;
          cands.push_back(c);
        }
        const auto rep = explore_inputs(ds, bench, cands, plan, xo.workers);
        io::write_text(fs::path(xo.out) / "importance.csv", rep.to_csv());
        io::write_text(fs::path(xo.out) / "importance.json", rep.to_json().dump(2) + "\n");
        io::write_text(fs::path(xo.out) / "exploration_manifest.json",
                       exploration_manifest(bench, cands, plan).dump(2) + "\n");
        for (const auto& r : rep.rows)
          std::printf("%-20s %7.2f%% [%7.2f, %7.2f]%s\n", r.name.c_str(), r.relative, r.lo, r.hi,
                      r.selected ? "  <- selected" : "");
      }
      if (sweep.empty() && level_sets.empty()) throw InvalidArgument("explore needs --levels or --sweep-blocks");
    } else if (*con) {
      const auto ds = co.load();
      const fs::path fc = cforecast.empty() ? pl::forecast_path(co.out, "stack", pl::Part::test) : fs::path(cforecast);
      const auto c = pl::contours_stage(ds, fc, sample, threshold, clevels, co.out);
      std::printf("%zu contour polylines at %zu levels written to %s\n", c.lines.size(), clevels.size(),
                  (fs::path(co.out) / "contours.csv").string().c_str());
    }
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
