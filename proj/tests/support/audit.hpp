#pragma once

#include <functional>
#include <string>
#include <vector>

#include "probcast/model/resnet.hpp"
#include "probcast/nn/ops.hpp"
#include "support/gradcheck.hpp"

namespace probcast::tcheck {

using nn::Tensor;
using nn::Var;

inline Var<double> random_leaf(Rng& rng, nn::Shape shape, const std::string& name, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& x : t.data) x = uniform(rng, lo, hi);
  return nn::leaf(std::move(t), true, name);
}

/// Random target tensor; the loss mse(y, target) has gradient (y - target).
inline Var<double> target_like(Rng& rng, const nn::Shape& shape) {
  Tensor<double> t(shape);
  for (double& x : t.data) x = uniform(rng, -1.0, 1.0);
  return nn::constant(std::move(t));
}

struct OpAudit {
  std::string name;
  std::function<GradCheckResult(std::uint64_t seed)> run;
};

/// Central-difference audits of every differentiable op, and of the full
/// one-block categorical network.
inline std::vector<OpAudit> op_audits() {
  std::vector<OpAudit> a;
  auto unary = [](const std::string& name, nn::Shape shape, std::function<Var<double>(const Var<double>&)> op) {
    return OpAudit{name, [=](std::uint64_t seed) {
                     Rng rng = make_rng(seed, 100);
                     auto x = random_leaf(rng, shape, "x");
                     Var<double> y0;
                     {
                       nn::NoGradGuard g;
                       y0 = op(x);
                     }
                     auto t = target_like(rng, y0->value.shape);
                     return grad_check({x}, [&] { return nn::mse_loss(op(x), t); });
                   }};
  };
  for (std::size_t k : {1u, 3u, 5u}) {
    a.push_back({"conv2d k=" + std::to_string(k), [k](std::uint64_t seed) {
                   Rng rng = make_rng(seed, 101);
                   auto x = random_leaf(rng, {2, 3, 5, 6}, "x");
                   auto w = random_leaf(rng, {4, 3, k, k}, "w");
                   auto b = random_leaf(rng, {4}, "b");
                   auto t = target_like(rng, {2, 4, 5, 6});
                   return grad_check({x, w, b}, [&] { return nn::mse_loss(nn::conv2d(x, w, b), t); });
                 }});
  }
  a.push_back({"linear", [](std::uint64_t seed) {
                 Rng rng = make_rng(seed, 102);
                 auto x = random_leaf(rng, {5, 4}, "x");
                 auto w = random_leaf(rng, {3, 4}, "w");
                 auto b = random_leaf(rng, {3}, "b");
                 auto t = target_like(rng, {5, 3});
                 return grad_check({x, w, b}, [&] { return nn::mse_loss(nn::linear(x, w, b), t); });
               }});
  a.push_back(unary("leaky_relu", {3, 4, 5}, [](const Var<double>& x) { return nn::leaky_relu(x, 0.3); }));
  a.push_back(unary("relu", {3, 4, 5}, [](const Var<double>& x) { return nn::relu(x); }));
  a.push_back(unary("dropout", {3, 4, 5}, [](const Var<double>& x) {
    Rng r = make_rng(7, 7);
    return nn::dropout(x, 0.3, true, &r);
  }));
  a.push_back(unary("scale", {7}, [](const Var<double>& x) { return nn::scale(x, -2.5); }));
  a.push_back(unary("square", {7}, [](const Var<double>& x) { return nn::square(x); }));
  a.push_back(unary("sum", {7}, [](const Var<double>& x) { return nn::sum(x); }));
  a.push_back(unary("mean", {7}, [](const Var<double>& x) { return nn::mean(x); }));
  a.push_back(unary("softmax", {2, 6, 3, 4}, [](const Var<double>& x) { return nn::softmax(x); }));
  a.push_back({"add", [](std::uint64_t seed) {
                 Rng rng = make_rng(seed, 103);
                 auto x = random_leaf(rng, {2, 5}, "x");
                 auto y = random_leaf(rng, {2, 5}, "y");
                 auto t = target_like(rng, {2, 5});
                 return grad_check({x, y}, [&] { return nn::mse_loss(nn::add(x, y), t); });
               }});
  a.push_back({"sparse_categorical_cross_entropy", [](std::uint64_t seed) {
                 Rng rng = make_rng(seed, 104);
                 auto p = random_leaf(rng, {2, 5, 3, 4}, "p", 0.05, 1.0);
                 std::vector<std::int32_t> tg(2 * 12);
                 for (auto& v : tg) v = static_cast<std::int32_t>(uniform_index(rng, 5));
                 return grad_check({p}, [&] { return nn::sparse_categorical_cross_entropy<double>(p, tg); });
               }});
  a.push_back({"softmax + cross entropy", [](std::uint64_t seed) {
                 Rng rng = make_rng(seed, 105);
                 auto z = random_leaf(rng, {2, 5, 3, 4}, "z", -2.0, 2.0);
                 std::vector<std::int32_t> tg(2 * 12);
                 for (auto& v : tg) v = static_cast<std::int32_t>(uniform_index(rng, 5));
                 return grad_check({z}, [&] { return nn::sparse_categorical_cross_entropy<double>(nn::softmax(z), tg); });
               }});
  a.push_back({"mse_loss", [](std::uint64_t seed) {
                 Rng rng = make_rng(seed, 106);
                 auto x = random_leaf(rng, {3, 4}, "x");
                 auto y = random_leaf(rng, {3, 4}, "y");
                 return grad_check({x, y}, [&] { return nn::mse_loss(x, y); });
               }});
  for (bool training : {true, false}) {
    a.push_back({std::string("batch_norm ") + (training ? "training" : "inference"), [training](std::uint64_t seed) {
                   Rng rng = make_rng(seed, 107);
                   auto x = random_leaf(rng, {3, 4, 3, 5}, "x", -2.0, 2.0);
                   auto g = random_leaf(rng, {4}, "gamma", 0.5, 1.5);
                   auto b = random_leaf(rng, {4}, "beta");
                   auto t = target_like(rng, {3, 4, 3, 5});
                   Tensor<double> rm({4}), rv({4}, 1.0);
                   for (double& v : rm.data) v = uniform(rng, -0.5, 0.5);
                   for (double& v : rv.data) v = uniform(rng, 0.5, 2.0);
                   return grad_check({x, g, b}, [&] {
                     auto m = rm, v = rv;  // keep buffers fixed across evaluations
                     return nn::mse_loss(nn::batch_norm(x, g, b, m, v, training), t);
                   });
                 }});
  }
  a.push_back({"layer_norm", [](std::uint64_t seed) {
                 Rng rng = make_rng(seed, 108);
                 auto x = random_leaf(rng, {3, 4, 3, 5}, "x", -2.0, 2.0);
                 auto g = random_leaf(rng, {4}, "gamma", 0.5, 1.5);
                 auto b = random_leaf(rng, {4}, "beta");
                 auto t = target_like(rng, {3, 4, 3, 5});
                 return grad_check({x, g, b}, [&] { return nn::mse_loss(nn::layer_norm(x, g, b), t); });
               }});
  a.push_back({"resnet 1 block categorical", [](std::uint64_t seed) {
                 ResNetConfig cfg;
                 cfg.n_blocks = 1;
                 cfg.channels = 4;
                 cfg.kernel = 5;
                 cfg.n_bins = 6;
                 cfg.inputs = {{"z", 500}, {"t", 850}};
                 auto model = ResNet<double>::build(cfg, seed);
                 Rng rng = make_rng(seed, 109);
                 Tensor<double> x({2, 2, 6, 8});
                 for (double& v : x.data) v = standard_normal(rng);
                 std::vector<std::int32_t> tg(2 * 48);
                 for (auto& v : tg) v = static_cast<std::int32_t>(uniform_index(rng, 6));
                 std::vector<Var<double>> params;
                 for (const auto& p : model.params.items())
                   if (p.trainable) params.push_back(p.var);
                 return grad_check(params, [&] {
                   Rng drop = make_rng(seed, 110);
                   const auto y = model.forward(x, {.train_norm = true, .dropout = true}, &drop);
                   return nn::sparse_categorical_cross_entropy<double>(y, tg);
                 });
               }});
  return a;
}

}  // namespace probcast::tcheck
