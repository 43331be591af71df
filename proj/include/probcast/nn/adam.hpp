#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "probcast/core/error.hpp"
#include "probcast/nn/params.hpp"

namespace probcast::nn {

struct AdamOptions {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over the trainable entries of a ParamStore.
template <class T>
class Adam {
 public:
  Adam(ParamStore<T>& params, AdamOptions opt = {}) : params_(&params), opt_(opt) {
    for (const auto& p : params.items()) {
      m_.emplace_back(p.trainable ? p.var->value.size() : 0, 0.0);
      v_.emplace_back(p.trainable ? p.var->value.size() : 0, 0.0);
    }
  }

  double learning_rate() const { return opt_.learning_rate; }
  void set_learning_rate(double lr) { opt_.learning_rate = lr; }
  std::size_t steps() const { return step_; }

  /// Applies one update from the accumulated gradients (missing gradient =
  /// zero) and clears them. A non-finite gradient aborts before any change.
  void step() {
    auto& items = params_->items();
    for (const auto& p : items) {
      if (!p.trainable) continue;
      for (T g : p.var->grad.data)
        if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + p.name);
    }
    ++step_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
    for (std::size_t k = 0; k < items.size(); ++k) {
      auto& p = items[k];
      if (!p.trainable) continue;
      auto& value = p.var->value.data;
      const auto& grad = p.var->grad.data;
      const bool has_grad = grad.size() == value.size();
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = has_grad ? static_cast<double>(grad[i]) : 0.0;
        m_[k][i] = opt_.beta1 * m_[k][i] + (1.0 - opt_.beta1) * g;
        v_[k][i] = opt_.beta2 * v_[k][i] + (1.0 - opt_.beta2) * g * g;
        const double mh = m_[k][i] / c1, vh = v_[k][i] / c2;
        value[i] = static_cast<T>(value[i] - opt_.learning_rate * mh / (std::sqrt(vh) + opt_.eps));
      }
    }
    params_->zero_grad();
  }

 private:
  ParamStore<T>* params_;
  AdamOptions opt_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace probcast::nn
