#pragma once

#include <string>
#include <vector>

#include "probcast/core/error.hpp"
#include "probcast/nn/graph.hpp"

namespace probcast::nn {

template <class T>
struct Param {
  std::string name;
  Var<T> var;
  bool trainable = true;
};

/// Ordered named parameters and buffers of one model.
template <class T>
class ParamStore {
 public:
  Var<T>& add(std::string name, Tensor<T> value, bool trainable = true) {
    probcast::detail::require(find(name) == nullptr, "duplicate parameter name " + name);
    items_.push_back({name, leaf(std::move(value), trainable, name), trainable});
    return items_.back().var;
  }

  const Var<T>* find(const std::string& name) const {
    for (const auto& p : items_)
      if (p.name == name) return &p.var;
    return nullptr;
  }

  const Var<T>& at(const std::string& name) const {
    const Var<T>* v = find(name);
    probcast::detail::require(v != nullptr, "no parameter named " + name);
    return *v;
  }

  std::vector<Param<T>>& items() { return items_; }
  const std::vector<Param<T>>& items() const { return items_; }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : items_)
      if (p.trainable) n += p.var->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : items_) p.var->grad = Tensor<T>();
  }

  /// Deep copy of all values; gradients are not copied.
  ParamStore clone() const {
    ParamStore out;
    for (const auto& p : items_) out.items_.push_back({p.name, leaf(p.var->value, p.trainable, p.name), p.trainable});
    return out;
  }

  void copy_values_from(const ParamStore& other) {
    probcast::detail::require(other.items_.size() == items_.size(), "parameter sets differ in length");
    for (std::size_t i = 0; i < items_.size(); ++i) {
      probcast::detail::require(other.items_[i].name == items_[i].name &&
                          other.items_[i].var->value.shape == items_[i].var->value.shape,
                      "parameter sets differ at " + items_[i].name);
      items_[i].var->value = other.items_[i].var->value;
    }
  }

 private:
  std::vector<Param<T>> items_;
};

}  // namespace probcast::nn
