#include <gtest/gtest.h>

#include <cmath>

#include "probcast/binning.hpp"
#include "probcast/synth.hpp"
#include "probcast/verification/weighted.hpp"
#include "support/oracles.hpp"

using namespace probcast;

namespace {

DensityGrid single_point(const BinSpec& s, std::vector<std::pair<std::size_t, double>> mass) {
  DensityGrid d(s, 1, 1);
  for (auto [i, p] : mass) d.probs[i] = p;
  return d;
}

}  // namespace

TEST(BinSpec, WidthAndLowerBounds) {
  EXPECT_DOUBLE_EQ(BinSpec(42500, 59300, 100).width(), 168.0);
  const BinSpec s(0, 100, 100);
  EXPECT_DOUBLE_EQ(s.width(), 1.0);
  EXPECT_DOUBLE_EQ(s.lower_bound(7), 7.0);
  EXPECT_THROW(BinSpec(1, 1, 10), InvalidArgument);
  EXPECT_THROW(BinSpec(0, 1, 1), InvalidArgument);
}

TEST(BinSpec, JsonRoundTrip) {
  const BinSpec s(-3.25, 17.5, 42);
  nlohmann::json j = s;
  EXPECT_EQ(j.get<BinSpec>(), s);
}

TEST(FitBins, UsesTrainingExtremes) {
  const GridSpec g = GridSpec::regular(1, 2);
  const Dataset ds(g, 0, 6, {{"z", 500}}, 3, {1, 5, 2, 4, -10, 50});
  const auto s = fit_bins(ds, {"z", 500}, 4, {0, 2});
  EXPECT_EQ(s.v_min, 1.0);
  EXPECT_EQ(s.v_max, 5.0);
  const Dataset flat(g, 0, 6, {{"z", 500}}, 2, {3, 3, 3, 3});
  EXPECT_THROW(fit_bins(flat, {"z", 500}, 4, {0, 2}), InvalidArgument);
}

TEST(Discretize, EdgesAndClamping) {
  const BinSpec s(10, 20, 10);
  Field f({"x", kSurfaceLevel}, 1, 6);
  f.values = {10.0, 10.0 + 1.5 * s.width(), 9.0, 20.0, 25.0, 19.999};
  ClampStats cs;
  const auto c = discretize(f, s, &cs);
  EXPECT_EQ(c.bins[0], 0);
  EXPECT_EQ(c.bins[1], 1);
  EXPECT_EQ(c.bins[2], 0);
  EXPECT_EQ(c.bins[3], 9);
  EXPECT_EQ(c.bins[4], 9);
  EXPECT_EQ(c.bins[5], 9);
  EXPECT_EQ(cs.below, 1u);
  EXPECT_EQ(cs.above, 1u);
  f.values[0] = std::nan("");
  EXPECT_THROW(discretize(f, s), NumericError);
}

TEST(Discretize, MatchesLinearScan) {
  Rng rng = make_rng(21);
  const BinSpec s(-7.3, 113.9, 100);
  for (int i = 0; i < 10000; ++i) {
    const double v = uniform(rng, -20, 130);
    std::size_t expect = 0;
    for (std::size_t b = 0; b < s.n_bins; ++b)
      if (s.v_min + static_cast<double>(b) * (s.v_max - s.v_min) / 100.0 <= v) expect = b;
    ASSERT_EQ(s.bin_of(v), expect) << v;
  }
}

TEST(Discretize, RepresentativesAreFixedPoints) {
  Rng rng = make_rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const BinSpec s(uniform(rng, -1e5, 0), uniform(rng, 1, 1e5), 2 + uniform_index(rng, 200));
    for (std::size_t b = 0; b < s.n_bins; ++b) ASSERT_EQ(s.bin_of(s.lower_bound(b)), b);
  }
}

TEST(Expectation, Examples) {
  const BinSpec s(0, 100, 100);
  EXPECT_DOUBLE_EQ(expectation(single_point(s, {{37, 1.0}})).values[0], 37.0);
  EXPECT_DOUBLE_EQ(expectation(single_point(s, {{0, 0.5}, {1, 0.5}})).values[0], 0.5);
  DensityGrid u(s, 1, 1);
  for (auto& p : u.probs) p = 0.01;
  EXPECT_NEAR(expectation(u).values[0], 49.5, 1e-12);
  EXPECT_THROW(expectation(single_point(s, {{0, 0.5}})), NumericError);
}

TEST(Stddev, Examples) {
  const BinSpec s(0, 100, 100);
  EXPECT_EQ(density_stddev(single_point(s, {{12, 1.0}})).values[0], 0.0);
  EXPECT_NEAR(density_stddev(single_point(s, {{0, 0.5}, {2, 0.5}})).values[0], 1.0, 1e-15);
}

TEST(Moments, MatchHighPrecisionOracle) {
  Rng rng = make_rng(23);
  const BinSpec s(-50.0, 350.0, 100);
  const auto d = tcheck::random_density_grid(rng, s, 25, 40);
  const auto mu = expectation(d), sd = density_stddev(d);
  for (std::size_t q = 0; q < d.n_points(); ++q) {
    EXPECT_TRUE(tcheck::rel_close(mu.values[q], tcheck::oracle_expectation(d.point(q), s), 1e-10));
    EXPECT_TRUE(tcheck::rel_close(sd.values[q], tcheck::oracle_stddev(d.point(q), s), 1e-10));
    EXPECT_GE(mu.values[q], s.v_min);
    EXPECT_LE(mu.values[q], s.v_max);
  }
}

TEST(Stddev, ZeroExactlyForOneHot) {
  Rng rng = make_rng(24);
  const BinSpec s(0, 10, 10);
  for (int i = 0; i < 200; ++i) {
    const bool one_hot = i % 2 == 0;
    DensityGrid d(s, 1, 1);
    if (one_hot) {
      d.probs[uniform_index(rng, 10)] = 1.0;
    } else {
      const auto p = tcheck::random_density(rng, 10, 0.5);
      std::copy(p.begin(), p.end(), d.probs.begin());
      if (std::count(d.probs.begin(), d.probs.end(), 0.0) == 9) continue;
    }
    EXPECT_EQ(density_stddev(d).values[0] <= 1e-12, one_hot);
  }
}

TEST(InbuiltRmse, ConstantAtVMinIsZero) {
  const GridSpec g = GridSpec::regular(2, 2);
  const Dataset ds(g, 0, 6, {{"z", 500}}, 2, std::vector<float>(8, 3.0f));
  EXPECT_EQ(inbuilt_rmse(ds, {"z", 500}, BinSpec(3.0, 4.0, 10), {0, 2}), 0.0);
}

TEST(InbuiltRmse, MatchesFlooringOracleAndOneHotExpectation) {
  SynthConfig cfg;
  cfg.n_lat = 8;
  cfg.n_lon = 16;
  cfg.n_steps = 60;
  const auto ds = synth_generate(cfg, 31);
  const VariableId z{"z", 500};
  const auto s = fit_bins(ds, z, 100, ds.all_times());
  const double r = inbuilt_rmse(ds, z, s, ds.all_times());

  std::vector<Field> truth, floored, onehot_mu;
  for (std::size_t t = 0; t < ds.n_time(); ++t) {
    const Field f = ds.field(t, z);
    Field fl = f;
    DensityGrid d(s, f.n_lat, f.n_lon);
    for (std::size_t q = 0; q < f.values.size(); ++q) {
      std::size_t b = 0;
      for (std::size_t i = 0; i < s.n_bins; ++i)
        if (s.lower_bound(i) <= f.values[q]) b = i;
      fl.values[q] = s.lower_bound(b);
      d.point(q)[b] = 1.0;
    }
    truth.push_back(f);
    floored.push_back(fl);
    onehot_mu.push_back(expectation(d));
  }
  EXPECT_TRUE(tcheck::rel_close(r, tcheck::oracle_weighted_rmse(floored, truth, ds.grid()), 1e-10));
  EXPECT_EQ(weighted_rmse(onehot_mu, truth, ds.grid()), r);
  EXPECT_GT(r, 0.0);
  EXPECT_LT(r, s.width());
}
