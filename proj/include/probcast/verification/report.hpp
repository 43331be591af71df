#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "probcast/verification/scores.hpp"
#include "probcast/verification/weighted.hpp"

namespace probcast {

/// A published reference number kept for juxtaposition only.
struct Fixture {
  std::string table;
  std::string row;
  std::string column;
  std::string text;
  double value = 0.0;
  std::string unit;

  bool operator==(const Fixture&) const = default;
};

/// Reference numbers from the 5.625-degree reanalysis experiments.
inline std::vector<Fixture> published_fixtures() {
  const std::string rmse = "RMSE (test)", crps_t = "CRPS", cov = "Coverage", bin = "Binning";
  const char* z = "m2 s-2";
  return {
      {rmse, "Stacked neural network", "Z500 3-day/5-day", "375/627", 375, z},
      {rmse, "Stacked neural network", "T850 3-day/5-day", "2.11/2.91", 2.11, "K"},
      {rmse, "Persistence", "Z500 3-day/5-day", "936 / 1033", 936, z},
      {rmse, "Persistence", "T850 3-day/5-day", "4.23 / 4.56", 4.23, "K"},
      {rmse, "Climatology", "Z500", "1075", 1075, z},
      {rmse, "Climatology", "T850", "5.51", 5.51, "K"},
      {rmse, "IFS T42", "Z500 3-day/5-day", "489 / 743", 489, z},
      {rmse, "IFS T42", "T850 3-day/5-day", "3.09 / 3.83", 3.09, "K"},
      {crps_t, "Stacked neural network", "Z500 3-day", "211", 211, z},
      {crps_t, "Stacked neural network", "Z500 5-day", "1500", 1500, z},
      {crps_t, "Stacked neural network", "T850 3-day", "1.22", 1.22, "K"},
      {crps_t, "Stacked neural network", "T850 5-day", "1.69", 1.69, "K"},
      {cov, "Within 95% confidence interval", "Z500 3-day / T850 3-day / Z500 5-day / T850 5-day",
       "13.8% / 17.2% / 14.7% / 17.3%", 13.8, "%"},
      {cov, "Within 99% confidence interval", "Z500 3-day / T850 3-day / Z500 5-day / T850 5-day",
       "16.3% / 20.3% / 17.4% / 20.5%", 16.3, "%"},
      {cov, "Within one sigma", "Z500 3-day / T850 3-day / Z500 5-day / T850 5-day",
       "64.7% / 71.2% / 67.3% / 71.2%", 64.7, "%"},
      {cov, "Within two sigma", "Z500 3-day / T850 3-day / Z500 5-day / T850 5-day",
       "93.6% / 94.0% / 94.0% / 94.2%", 93.6, "%"},
      {bin, "Bin width", "Z500", "169", 169, z},
      {bin, "Bin width", "T850", "1.02", 1.02, "K"},
      {bin, "Inbuilt RMSE", "Z500", "91.2", 91.2, z},
      {bin, "Inbuilt RMSE", "T850", "0.992", 0.992, "K"},
  };
}

inline constexpr const char* kFixtureLabel = "published reference (not reproduced)";

/// All verification metrics of one forecast run.
struct ScoreReport {
  std::string variable;
  std::int64_t lead_hours = 0;
  std::size_t n_samples = 0;
  std::size_t n_members = 0;
  std::string forecast;

  double weighted_rmse = 0.0;
  MseInterval mse;
  double mean_crps = 0.0;
  std::optional<double> spread;
  std::optional<double> spread_skill;
  CoverageTable coverage;
  std::vector<double> topk;  // k = 1..5
  /// Named comparison RMSEs (persistence, climatology, learners, averages).
  std::vector<std::pair<std::string, double>> baselines;
  std::vector<Fixture> fixtures;
};

inline nlohmann::ordered_json to_json(const ScoreReport& r) {
  nlohmann::ordered_json j;
  j["variable"] = r.variable;
  j["lead_hours"] = r.lead_hours;
  j["n_samples"] = r.n_samples;
  j["n_members"] = r.n_members;
  j["forecast"] = r.forecast;
  j["weighted_rmse"] = r.weighted_rmse;
  j["weighted_mse"] = {{"mse", r.mse.mse}, {"lo95", r.mse.lo}, {"hi95", r.mse.hi}};
  j["mean_crps"] = r.mean_crps;
  j["spread"] = r.spread ? nlohmann::ordered_json(*r.spread) : nlohmann::ordered_json();
  j["spread_skill"] = r.spread_skill ? nlohmann::ordered_json(*r.spread_skill) : nlohmann::ordered_json();
  j["coverage"] = {{"ci95", r.coverage.ci95},
                   {"ci99", r.coverage.ci99},
                   {"one_sigma", r.coverage.one_sigma},
                   {"two_sigma", r.coverage.two_sigma},
                   {"n_points", r.coverage.n_points}};
  j["topk"] = r.topk;
  auto& b = j["baselines"] = nlohmann::ordered_json::array();
  for (const auto& [name, v] : r.baselines) b.push_back({{"name", name}, {"rmse", v}});
  auto& f = j["fixtures"] = nlohmann::ordered_json::array();
  for (const auto& x : r.fixtures)
    f.push_back({{"label", kFixtureLabel},
                 {"table", x.table},
                 {"row", x.row},
                 {"column", x.column},
                 {"text", x.text},
                 {"value", x.value},
                 {"unit", x.unit}});
  return j;
}

inline ScoreReport score_report_from_json(const nlohmann::ordered_json& j) {
  ScoreReport r;
  r.variable = j.at("variable").get<std::string>();
  r.lead_hours = j.at("lead_hours").get<std::int64_t>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.n_members = j.at("n_members").get<std::size_t>();
  r.forecast = j.at("forecast").get<std::string>();
  r.weighted_rmse = j.at("weighted_rmse").get<double>();
  r.mse = {j.at("weighted_mse").at("mse").get<double>(), j.at("weighted_mse").at("lo95").get<double>(),
           j.at("weighted_mse").at("hi95").get<double>()};
  r.mean_crps = j.at("mean_crps").get<double>();
  if (!j.at("spread").is_null()) r.spread = j.at("spread").get<double>();
  if (!j.at("spread_skill").is_null()) r.spread_skill = j.at("spread_skill").get<double>();
  const auto& c = j.at("coverage");
  r.coverage = {c.at("ci95").get<double>(), c.at("ci99").get<double>(), c.at("one_sigma").get<double>(),
                c.at("two_sigma").get<double>(), c.at("n_points").get<std::size_t>()};
  r.topk = j.at("topk").get<std::vector<double>>();
  for (const auto& b : j.at("baselines")) r.baselines.emplace_back(b.at("name").get<std::string>(), b.at("rmse").get<double>());
  for (const auto& f : j.at("fixtures"))
    r.fixtures.push_back({f.at("table").get<std::string>(), f.at("row").get<std::string>(),
                          f.at("column").get<std::string>(), f.at("text").get<std::string>(),
                          f.at("value").get<double>(), f.at("unit").get<std::string>()});
  return r;
}

/// Aligned-column text rendering.
inline std::string render_report(const ScoreReport& r) {
  std::string out;
  char buf[256];
  auto line = [&](const char* name, double v) {
    std::snprintf(buf, sizeof buf, "  %-34s %14.6g\n", name, v);
    out += buf;
  };
  std::snprintf(buf, sizeof buf, "Forecast: %s  variable %s  lead %lld h  samples %zu  members %zu\n",
                r.forecast.c_str(), r.variable.c_str(), static_cast<long long>(r.lead_hours), r.n_samples,
                r.n_members);
  out += buf;
  out += "Run metrics\n";
  line("weighted RMSE", r.weighted_rmse);
  line("weighted MSE", r.mse.mse);
  line("weighted MSE 95% CI low", r.mse.lo);
  line("weighted MSE 95% CI high", r.mse.hi);
  line("mean CRPS", r.mean_crps);
  if (r.spread) line("ensemble spread", *r.spread);
  if (r.spread_skill) line("spread / RMSE", *r.spread_skill);
  line("within 95% CI (%)", r.coverage.ci95);
  line("within 99% CI (%)", r.coverage.ci99);
  line("within one sigma (%)", r.coverage.one_sigma);
  line("within two sigma (%)", r.coverage.two_sigma);
  for (std::size_t k = 0; k < r.topk.size(); ++k) {
    std::snprintf(buf, sizeof buf, "  %-34s %14.6g\n", ("top-" + std::to_string(k + 1) + " match (%)").c_str(),
                  r.topk[k]);
    out += buf;
  }
  if (!r.baselines.empty()) {
    out += "Comparison RMSE\n";
    for (const auto& [name, v] : r.baselines) line(name.c_str(), v);
  }
  if (!r.fixtures.empty()) {
    out += std::string("Reference values: ") + kFixtureLabel + "\n";
    std::string table;
    for (const auto& f : r.fixtures) {
      if (f.table != table) {
        table = f.table;
        out += "  [" + table + "]\n";
      }
      std::snprintf(buf, sizeof buf, "  %-32s %-50s %-32s %s\n", f.row.c_str(), f.column.c_str(), f.text.c_str(),
                    f.unit.c_str());
      out += buf;
    }
  }
  return out;
}

}  // namespace probcast
