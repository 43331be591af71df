#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "probcast/nn/adam.hpp"
#include "probcast/nn/checkpoint.hpp"
#include "probcast/nn/ops.hpp"
#include "support/audit.hpp"

using namespace probcast;
using namespace probcast::nn;
using probcast::tcheck::grad_check;

namespace {

Var<double> param(Shape s, std::vector<double> v, const std::string& name = "p") {
  return leaf(Tensor<double>(std::move(s), std::move(v)), true, name);
}

}  // namespace

TEST(GradientAudit, EveryOpOverTwentySeeds) {
  for (const auto& audit : probcast::tcheck::op_audits()) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto r = audit.run(seed);
      EXPECT_GT(r.checked, 0u) << audit.name;
      EXPECT_LT(r.max_rel_error, 1e-4) << audit.name << " seed " << seed << " worst " << r.worst;
    }
  }
}

TEST(Backward, SumGivesOnes) {
  auto x = param({2, 3}, {1, 2, 3, 4, 5, 6});
  backward(sum(x));
  for (double g : x->grad.data) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Backward, SquareAtThree) {
  auto x = param({1}, {3.0});
  backward(sum(square(x)));
  EXPECT_DOUBLE_EQ(x->grad.data[0], 6.0);
}

TEST(Backward, SecondCallThrows) {
  auto x = param({1}, {3.0});
  auto loss = sum(square(x));
  backward(loss);
  EXPECT_THROW(backward(loss), Error);
}

TEST(Backward, GradientsAccumulateAcrossGraphs) {
  auto x = param({1}, {2.0});
  backward(sum(square(x)));
  backward(sum(square(x)));
  EXPECT_DOUBLE_EQ(x->grad.data[0], 8.0);
}

TEST(Backward, NoGradGuardRecordsNothing) {
  auto x = param({1}, {2.0});
  NoGradGuard g;
  auto y = square(x);
  EXPECT_FALSE(y->requires_grad);
  EXPECT_THROW(backward(sum(y)), InvalidArgument);
}

TEST(Backward, NonScalarLossRejected) {
  auto x = param({2}, {1.0, 2.0});
  EXPECT_THROW(backward(square(x)), InvalidArgument);
}

TEST(Conv2d, OneByOneIdentityKernel) {
  Rng rng = make_rng(1);
  auto x = probcast::tcheck::random_leaf(rng, {2, 3, 4, 5}, "x");
  Tensor<double> w({3, 3, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) w.data[c * 3 + c] = 1.0;
  auto y = conv2d(x, constant(w), constant(Tensor<double>({3})));
  EXPECT_EQ(y->value, x->value);
}

TEST(Conv2d, ImpulseWrapsInLongitudeAndIsCutInLatitude) {
  // impulse at (lat 0, lon 0) through an all-ones 3x3 kernel
  Tensor<double> x({1, 1, 4, 5});
  x.data[0] = 1.0;
  auto y = conv2d(constant(x), constant(Tensor<double>({1, 1, 3, 3}, 1.0)), constant(Tensor<double>({1})));
  auto at = [&](std::size_t j, std::size_t k) { return y->value.data[j * 5 + k]; };
  EXPECT_DOUBLE_EQ(at(0, 4), 1.0);  // wrapped neighbour
  EXPECT_DOUBLE_EQ(at(1, 4), 1.0);
  EXPECT_DOUBLE_EQ(at(0, 1), 1.0);
  EXPECT_DOUBLE_EQ(at(3, 0), 0.0);  // no wrap across the poles
  EXPECT_DOUBLE_EQ(at(2, 0), 0.0);
  double total = 0.0;
  for (double v : y->value.data) total += v;
  EXPECT_DOUBLE_EQ(total, 6.0);  // row -1 is padding
}

TEST(Conv2d, LinearInInput) {
  Rng rng = make_rng(2);
  auto a = probcast::tcheck::random_leaf(rng, {1, 2, 4, 6}, "a");
  auto b = probcast::tcheck::random_leaf(rng, {1, 2, 4, 6}, "b");
  auto w = probcast::tcheck::random_leaf(rng, {3, 2, 3, 3}, "w");
  auto zero = constant(Tensor<double>({3}));
  auto lhs = conv2d(add(a, scale(b, 2.0)), w, zero);
  auto rhs = add(conv2d(a, w, zero), scale(conv2d(b, w, zero), 2.0));
  for (std::size_t i = 0; i < lhs->value.size(); ++i) EXPECT_NEAR(lhs->value.data[i], rhs->value.data[i], 1e-12);
}

TEST(Conv2d, EquivariantUnderLongitudeShift) {
  Rng rng = make_rng(3);
  const std::size_t c = 2, nl = 4, nk = 6, shift = 2;
  auto x = probcast::tcheck::random_leaf(rng, {1, c, nl, nk}, "x");
  Tensor<double> xs({1, c, nl, nk});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t j = 0; j < nl; ++j)
      for (std::size_t k = 0; k < nk; ++k)
        xs.data[(ch * nl + j) * nk + (k + shift) % nk] = x->value.data[(ch * nl + j) * nk + k];
  auto w = probcast::tcheck::random_leaf(rng, {1, c, 5, 5}, "w");
  auto b = probcast::tcheck::random_leaf(rng, {1}, "b");
  auto y = conv2d(x, w, b), ys = conv2d(constant(xs), w, b);
  for (std::size_t j = 0; j < nl; ++j)
    for (std::size_t k = 0; k < nk; ++k)
      EXPECT_NEAR(ys->value.data[j * nk + (k + shift) % nk], y->value.data[j * nk + k], 1e-12);
}

TEST(Conv2d, RejectsEvenKernelAndChannelMismatch) {
  auto x = constant(Tensor<double>({1, 2, 3, 3}));
  EXPECT_THROW(conv2d(x, constant(Tensor<double>({1, 2, 2, 2})), constant(Tensor<double>({1}))), InvalidArgument);
  EXPECT_THROW(conv2d(x, constant(Tensor<double>({1, 3, 3, 3})), constant(Tensor<double>({1}))), InvalidArgument);
}

TEST(Activations, LeakyReluValues) {
  auto y = leaky_relu(constant(Tensor<double>({3}, {-2.0, 0.0, 1.5})), 0.3);
  EXPECT_DOUBLE_EQ(y->value.data[0], -0.6);
  EXPECT_DOUBLE_EQ(y->value.data[1], 0.0);
  EXPECT_DOUBLE_EQ(y->value.data[2], 1.5);
}

TEST(Dropout, DisabledReturnsInput) {
  auto x = constant(Tensor<double>({4}, 1.0));
  EXPECT_EQ(dropout(x, 0.5, false, nullptr).get(), x.get());
  Rng rng = make_rng(0);
  EXPECT_EQ(dropout(x, 0.0, true, &rng).get(), x.get());
}

TEST(Dropout, KeepsExpectationAndDropsAtRate) {
  const std::size_t n = 1'000'000;
  const double rate = 0.1;
  Rng rng = make_rng(4);
  auto y = dropout(constant(Tensor<double>({n}, 1.0)), rate, true, &rng);
  double sum = 0.0;
  std::size_t zeros = 0;
  for (double v : y->value.data) {
    sum += v;
    zeros += v == 0.0;
    if (v != 0.0) {
      EXPECT_NEAR(v, 1.0 / (1.0 - rate), 1e-12);
    }
  }
  EXPECT_NEAR(static_cast<double>(zeros) / n, rate, 0.002);
  EXPECT_NEAR(sum / n, 1.0, 0.003);
}

TEST(Softmax, TwoClassExample) {
  auto p = softmax(constant(Tensor<double>({1, 2}, {std::log(1.0), std::log(3.0)})));
  EXPECT_NEAR(p->value.data[0], 0.25, 1e-15);
  EXPECT_NEAR(p->value.data[1], 0.75, 1e-15);
}

TEST(Softmax, SumsToOneAndStableForLargeLogits) {
  auto p = softmax(constant(Tensor<double>({1, 3, 1, 2}, {1000, -1000, 1001, 0, 999, 5})));
  for (std::size_t pos = 0; pos < 2; ++pos) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = p->value.data[c * 2 + pos];
      EXPECT_TRUE(std::isfinite(v));
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(CrossEntropy, UniformOverHundredBins) {
  auto p = constant(Tensor<double>({1, 100, 1, 1}, 0.01));
  const std::int32_t t[] = {42};
  EXPECT_NEAR(sparse_categorical_cross_entropy<double>(p, t)->value.data[0], std::log(100.0), 1e-12);
}

TEST(CrossEntropy, FloorsZeroProbability) {
  auto p = constant(Tensor<double>({1, 2, 1, 1}, {1.0, 0.0}));
  const std::int32_t t[] = {1};
  EXPECT_NEAR(sparse_categorical_cross_entropy<double>(p, t)->value.data[0], -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, OutOfRangeTargetThrows) {
  auto p = constant(Tensor<double>({1, 2, 1, 1}, 0.5));
  const std::int32_t t[] = {2};
  EXPECT_THROW(sparse_categorical_cross_entropy<double>(p, t), InvalidArgument);
}

TEST(Mse, Examples) {
  auto a = constant(Tensor<double>({3}, {1.0, 2.0, 3.0}));
  EXPECT_DOUBLE_EQ(mse_loss(a, a)->value.data[0], 0.0);
  auto b = constant(Tensor<double>({3}, {2.0, 2.0, 5.0}));
  EXPECT_DOUBLE_EQ(mse_loss(a, b)->value.data[0], 5.0 / 3.0);
}

TEST(BatchNorm, TrainingNormalisesAndUpdatesRunningStats) {
  Rng rng = make_rng(5);
  auto x = probcast::tcheck::random_leaf(rng, {4, 2, 3, 3}, "x", 3.0, 7.0);
  Tensor<double> rm({2}), rv({2}, 1.0);
  auto y = batch_norm(x, constant(Tensor<double>({2}, 1.0)), constant(Tensor<double>({2})), rm, rv, true);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0.0, m2 = 0.0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 9; ++i) {
        const double v = y->value.data[(b * 2 + c) * 9 + i];
        m += v;
        m2 += v * v;
      }
    m /= 36.0;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(m2 / 36.0, 1.0, 1e-2);  // eps keeps it slightly below one
    EXPECT_GT(rm.data[c], 0.0);         // moved towards the batch mean (about 5)
    EXPECT_LT(rm.data[c], 0.1);
  }
}

TEST(BatchNorm, InferenceUsesRunningStats) {
  Tensor<double> rm({1}, {2.0}), rv({1}, {4.0});
  auto x = constant(Tensor<double>({1, 1, 1, 2}, {2.0, 6.0}));
  auto y = batch_norm(x, constant(Tensor<double>({1}, 1.0)), constant(Tensor<double>({1}, 0.5)), rm, rv, false);
  EXPECT_NEAR(y->value.data[0], 0.5, 1e-12);
  EXPECT_NEAR(y->value.data[1], 0.5 + 4.0 / std::sqrt(4.0 + 1e-3), 1e-12);
  EXPECT_DOUBLE_EQ(rm.data[0], 2.0);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  ParamStore<double> ps;
  auto p = ps.add("w", Tensor<double>({3}, {1.0, -2.0, 3.0}));
  Adam<double> opt(ps);
  p->grad = Tensor<double>({3});
  opt.step();
  opt.step();  // missing gradient also counts as zero
  EXPECT_EQ(p->value.data, (std::vector<double>{1.0, -2.0, 3.0}));
  EXPECT_EQ(opt.steps(), 2u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore<double> ps;
  auto p = ps.add("w", Tensor<double>({2}, {1.0, 1.0}));
  Adam<double> opt(ps, {.learning_rate = 1e-3});
  p->grad = Tensor<double>({2}, {5.0, -0.2});
  opt.step();
  EXPECT_NEAR(p->value.data[0], 1.0 - 1e-3, 1e-9);
  EXPECT_NEAR(p->value.data[1], 1.0 + 1e-3, 1e-9);
}

TEST(Adam, MinimisesQuadraticBowl) {
  ParamStore<double> ps;
  auto p = ps.add("w", Tensor<double>({2}, {3.0, -4.0}));
  Adam<double> opt(ps, {.learning_rate = 0.05});
  auto centre = constant(Tensor<double>({2}, {1.0, 2.0}));
  for (int i = 0; i < 2000; ++i) {
    backward(mse_loss(p, centre));
    opt.step();
  }
  EXPECT_NEAR(p->value.data[0], 1.0, 1e-2);
  EXPECT_NEAR(p->value.data[1], 2.0, 1e-2);
}

TEST(Adam, NonFiniteGradientNamesParameterAndLeavesValues) {
  ParamStore<double> ps;
  auto a = ps.add("block0.conv.w", Tensor<double>({1}, {1.0}));
  auto b = ps.add("head.b", Tensor<double>({1}, {2.0}));
  Adam<double> opt(ps);
  a->grad = Tensor<double>({1}, {0.5});
  b->grad = Tensor<double>({1}, {std::nan("")});
  try {
    opt.step();
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("head.b"), std::string::npos);
  }
  EXPECT_DOUBLE_EQ(a->value.data[0], 1.0);
  EXPECT_DOUBLE_EQ(b->value.data[0], 2.0);
}

TEST(Adam, SkipsNonTrainable) {
  ParamStore<double> ps;
  auto a = ps.add("running_mean", Tensor<double>({1}, {1.0}), false);
  Adam<double> opt(ps);
  a->grad = Tensor<double>({1}, {1.0});
  opt.step();
  EXPECT_DOUBLE_EQ(a->value.data[0], 1.0);
}

TEST(Checkpoint, RoundTripsConfigAndTensors) {
  ParamStore<double> ps;
  ps.add("a", Tensor<double>({2, 2}, {1.5, -2.0, 0.25, 8.0}));
  ps.add("b", Tensor<double>({3}, {0.0, 1.0, 2.0}), false);
  Checkpoint ck;
  ck.config = {{"kind", "test"}, {"n", 3}};
  ck.tensors = export_params(ps);
  const auto back = decode_checkpoint(encode_checkpoint(ck));
  EXPECT_EQ(back.config, ck.config);
  ASSERT_EQ(back.tensors.size(), 2u);
  EXPECT_EQ(back.at("a"), ck.at("a"));

  ParamStore<double> other;
  other.add("a", Tensor<double>({2, 2}));
  other.add("b", Tensor<double>({3}), false);
  import_params(other, back);
  EXPECT_EQ(other.at("a")->value, ps.at("a")->value);

  const auto path = std::filesystem::temp_directory_path() / "probcast_ckpt_test.pwnn";
  save_checkpoint(ck, path);
  EXPECT_EQ(load_checkpoint(path).at("b"), ck.at("b"));
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptInputsAreDecodeErrors) {
  Checkpoint ck;
  ck.config = {{"k", 1}};
  ck.tensors.push_back({"w", Tensor<float>({2}, {1.0f, 2.0f})});
  auto bytes = encode_checkpoint(ck);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), DecodeError);
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  EXPECT_THROW(decode_checkpoint(cut), DecodeError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_checkpoint(extra), DecodeError);
  EXPECT_THROW(ck.at("missing"), DecodeError);

  ParamStore<double> wrong;
  wrong.add("w", Tensor<double>({3}));
  EXPECT_THROW(import_params(wrong, ck), DecodeError);
}
