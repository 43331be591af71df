#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "probcast/core/error.hpp"
#include "probcast/core/random.hpp"
#include "probcast/nn/gemm.hpp"
#include "probcast/nn/graph.hpp"

namespace probcast::nn {

inline constexpr double kProbFloor = 1e-12;

namespace detail {

using probcast::detail::require;

template <class T>
void accumulate(Node<T>& n, const std::vector<T>& g) {
  auto& dst = n.ensure_grad().data;
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

inline void trace_signs(std::span<const float> x) {
  if (auto* tr = kink_trace) for (float v : x) tr->push_back(v >= 0.0f);
}
inline void trace_signs(std::span<const double> x) {
  if (auto* tr = kink_trace) for (double v : x) tr->push_back(v >= 0.0);
}

/// Spatial geometry shared by im2col and col2im.
struct ConvGeom {
  std::size_t cin, h, w, k, pad;
  std::vector<std::size_t> lon;  // [dk][l] -> wrapped source longitude
  ConvGeom(std::size_t cin_, std::size_t h_, std::size_t w_, std::size_t k_)
      : cin(cin_), h(h_), w(w_), k(k_), pad(k_ / 2), lon(k_ * w_) {
    for (std::size_t dk = 0; dk < k; ++dk)
      for (std::size_t l = 0; l < w; ++l) {
        const long src = static_cast<long>(l + dk) - static_cast<long>(pad);
        const long ww = static_cast<long>(w);
        lon[dk * w + l] = static_cast<std::size_t>(((src % ww) + ww) % ww);
      }
  }
  std::size_t rows() const { return cin * k * k; }
  std::size_t hw() const { return h * w; }
};

/// col[(c, di, dk)][s * hw + j * w + l] for samples [b0, b0 + nb).
template <class T>
void im2col(const T* x, const ConvGeom& g, std::size_t b0, std::size_t nb, T* col) {
  const std::size_t hw = g.hw(), cols = nb * hw;
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t di = 0; di < g.k; ++di)
      for (std::size_t dk = 0; dk < g.k; ++dk) {
        T* row = col + ((c * g.k + di) * g.k + dk) * cols;
        const std::size_t* lon = g.lon.data() + dk * g.w;
        for (std::size_t s = 0; s < nb; ++s) {
          const T* src = x + ((b0 + s) * g.cin + c) * hw;
          for (std::size_t j = 0; j < g.h; ++j) {
            T* dst = row + s * hw + j * g.w;
            const long sj = static_cast<long>(j + di) - static_cast<long>(g.pad);
            if (sj < 0 || sj >= static_cast<long>(g.h)) {
              std::fill(dst, dst + g.w, T(0));
              continue;
            }
            const T* srow = src + static_cast<std::size_t>(sj) * g.w;
            for (std::size_t l = 0; l < g.w; ++l) dst[l] = srow[lon[l]];
          }
        }
      }
}

template <class T>
void col2im(const T* col, const ConvGeom& g, std::size_t b0, std::size_t nb, T* dx) {
  const std::size_t hw = g.hw(), cols = nb * hw;
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t di = 0; di < g.k; ++di)
      for (std::size_t dk = 0; dk < g.k; ++dk) {
        const T* row = col + ((c * g.k + di) * g.k + dk) * cols;
        const std::size_t* lon = g.lon.data() + dk * g.w;
        for (std::size_t s = 0; s < nb; ++s) {
          T* dst = dx + ((b0 + s) * g.cin + c) * hw;
          for (std::size_t j = 0; j < g.h; ++j) {
            const long sj = static_cast<long>(j + di) - static_cast<long>(g.pad);
            if (sj < 0 || sj >= static_cast<long>(g.h)) continue;
            const T* src = row + s * hw + j * g.w;
            T* drow = dst + static_cast<std::size_t>(sj) * g.w;
            for (std::size_t l = 0; l < g.w; ++l) drow[lon[l]] += src[l];
          }
        }
      }
}

inline std::size_t conv_chunk(std::size_t rows, std::size_t hw, std::size_t batch) {
  constexpr std::size_t kMaxColElements = std::size_t{1} << 23;
  return std::clamp<std::size_t>(kMaxColElements / std::max<std::size_t>(1, rows * hw), 1, batch);
}

}  // namespace detail

/// Same-size 2-D convolution on (batch, channel, lat, lon) with periodic
/// longitude and zero latitude padding. w is (cout, cin, k, k), k odd; b is
/// (cout).
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const auto& xs = x->value.shape;
  const auto& ws = w->value.shape;
  probcast::detail::require(xs.size() == 4, "conv2d input must be rank 4, got " + shape_string(xs));
  probcast::detail::require(ws.size() == 4 && ws[2] == ws[3], "conv2d kernel must be (out, in, k, k)");
  probcast::detail::require(ws[2] % 2 == 1, "conv2d kernel size must be odd");
  probcast::detail::require(ws[1] == xs[1], "conv2d channel mismatch: input has " + std::to_string(xs[1]) +
                                      " channels, kernel expects " + std::to_string(ws[1]));
  probcast::detail::require(b->value.shape == Shape{ws[0]}, "conv2d bias must have one entry per output channel");
  const std::size_t batch = xs[0], cout = ws[0];
  const detail::ConvGeom g(xs[1], xs[2], xs[3], ws[2]);
  const std::size_t hw = g.hw(), rows = g.rows();
  const std::size_t chunk = detail::conv_chunk(rows, hw, batch);

  Tensor<T> out({batch, cout, xs[2], xs[3]});
  std::vector<T> col(rows * chunk * hw), tmp(cout * chunk * hw);
  for (std::size_t b0 = 0; b0 < batch; b0 += chunk) {
    const std::size_t nb = std::min(chunk, batch - b0), n = nb * hw;
    detail::im2col(x->value.data.data(), g, b0, nb, col.data());
    gemm(false, false, static_cast<int>(cout), static_cast<int>(n), static_cast<int>(rows), T(1), w->value.data.data(),
         static_cast<int>(rows), col.data(), static_cast<int>(n), T(0), tmp.data(), static_cast<int>(n));
    for (std::size_t s = 0; s < nb; ++s)
      for (std::size_t o = 0; o < cout; ++o) {
        const T* src = tmp.data() + o * n + s * hw;
        T* dst = out.data.data() + ((b0 + s) * cout + o) * hw;
        const T bias = b->value.data[o];
        for (std::size_t i = 0; i < hw; ++i) dst[i] = src[i] + bias;
      }
  }

  return make_result<T>(std::move(out), {x, w, b}, [g, batch, cout, chunk](Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& w = *self.inputs[1];
    auto& b = *self.inputs[2];
    const std::size_t hw = g.hw(), rows = g.rows();
    const T* dy = self.grad.data.data();
    if (b.requires_grad) {
      auto& db = b.ensure_grad().data;
      for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t o = 0; o < cout; ++o) {
          const T* src = dy + (s * cout + o) * hw;
          T acc = 0;
          for (std::size_t i = 0; i < hw; ++i) acc += src[i];
          db[o] += acc;
        }
    }
    if (!w.requires_grad && !x.requires_grad) return;
    std::vector<T> col(rows * chunk * hw), dyc(cout * chunk * hw), dcol;
    if (x.requires_grad) {
      x.ensure_grad();
      dcol.resize(rows * chunk * hw);
    }
    for (std::size_t b0 = 0; b0 < batch; b0 += chunk) {
      const std::size_t nb = std::min(chunk, batch - b0), n = nb * hw;
      for (std::size_t s = 0; s < nb; ++s)
        for (std::size_t o = 0; o < cout; ++o)
          std::copy_n(dy + ((b0 + s) * cout + o) * hw, hw, dyc.data() + o * n + s * hw);
      if (w.requires_grad) {
        detail::im2col(x.value.data.data(), g, b0, nb, col.data());
        gemm(false, true, static_cast<int>(cout), static_cast<int>(rows), static_cast<int>(n), T(1), dyc.data(),
             static_cast<int>(n), col.data(), static_cast<int>(n), T(1), w.ensure_grad().data.data(),
             static_cast<int>(rows));
      }
      if (x.requires_grad) {
        gemm(true, false, static_cast<int>(rows), static_cast<int>(n), static_cast<int>(cout), T(1),
             w.value.data.data(), static_cast<int>(rows), dyc.data(), static_cast<int>(n), T(0), dcol.data(),
             static_cast<int>(n));
        detail::col2im(dcol.data(), g, b0, nb, x.grad.data.data());
      }
    }
  });
}

/// y = x W^T + b for x (n, in), W (out, in), b (out).
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  const auto& xs = x->value.shape;
  const auto& ws = w->value.shape;
  probcast::detail::require(xs.size() == 2 && ws.size() == 2, "linear expects rank-2 input and weight");
  probcast::detail::require(xs[1] == ws[1], "linear dimension mismatch: input has " + std::to_string(xs[1]) +
                                      " features, weight expects " + std::to_string(ws[1]));
  probcast::detail::require(b->value.shape == Shape{ws[0]}, "linear bias must have one entry per output");
  const std::size_t n = xs[0], in = xs[1], out_dim = ws[0];
  Tensor<T> out({n, out_dim});
  for (std::size_t r = 0; r < n; ++r) std::copy(b->value.data.begin(), b->value.data.end(), out.data.begin() + r * out_dim);
  if (n > 0)
    gemm(false, true, static_cast<int>(n), static_cast<int>(out_dim), static_cast<int>(in), T(1), x->value.data.data(),
         static_cast<int>(in), w->value.data.data(), static_cast<int>(in), T(1), out.data.data(),
         static_cast<int>(out_dim));
  return make_result<T>(std::move(out), {x, w, b}, [n, in, out_dim](Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& w = *self.inputs[1];
    auto& b = *self.inputs[2];
    if (n == 0) return;
    const T* dy = self.grad.data.data();
    if (b.requires_grad) {
      auto& db = b.ensure_grad().data;
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t o = 0; o < out_dim; ++o) db[o] += dy[r * out_dim + o];
    }
    if (w.requires_grad)
      gemm(true, false, static_cast<int>(out_dim), static_cast<int>(in), static_cast<int>(n), T(1), dy,
           static_cast<int>(out_dim), x.value.data.data(), static_cast<int>(in), T(1), w.ensure_grad().data.data(),
           static_cast<int>(in));
    if (x.requires_grad)
      gemm(false, false, static_cast<int>(n), static_cast<int>(in), static_cast<int>(out_dim), T(1), dy,
           static_cast<int>(out_dim), w.value.data.data(), static_cast<int>(in), T(1), x.ensure_grad().data.data(),
           static_cast<int>(in));
  });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T alpha = T(0.3)) {
  detail::trace_signs(std::span<const T>(x->value.data));
  Tensor<T> out = x->value;
  for (T& v : out.data)
    if (!(v >= T(0))) v *= alpha;
  return make_result<T>(std::move(out), {x}, [alpha](Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& dx = x.ensure_grad().data;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad.data[i] * (x.value.data[i] >= T(0) ? T(1) : alpha);
  });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  detail::trace_signs(std::span<const T>(x->value.data));
  Tensor<T> out = x->value;
  for (T& v : out.data) v = v > T(0) ? v : T(0);
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& dx = x.ensure_grad().data;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (x.value.data[i] > T(0)) dx[i] += self.grad.data[i];
  });
}

/// Inverted dropout. Disabled or rate 0 returns `x` itself.
template <class T>
Var<T> dropout(const Var<T>& x, double rate, bool enabled, Rng* rng) {
  probcast::detail::require(rate >= 0.0 && rate < 1.0, "dropout rate must lie in [0, 1)");
  if (!enabled || rate == 0.0) return x;
  probcast::detail::require(rng != nullptr, "enabled dropout needs a random stream");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x->value.size());
  for (T& m : mask) m = uniform01(*rng) < rate ? T(0) : keep_scale;
  Tensor<T> out = x->value;
  for (std::size_t i = 0; i < mask.size(); ++i) out.data[i] *= mask[i];
  return make_result<T>(std::move(out), {x}, [mask = std::move(mask)](Node<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad().data;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad.data[i] * mask[i];
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  probcast::detail::require(a->value.shape == b->value.shape, "add: shape mismatch " + shape_string(a->value.shape) + " vs " +
                                                        shape_string(b->value.shape));
  Tensor<T> out = a->value;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b->value.data[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) detail::accumulate(*in, self.grad.data);
  });
}

template <class T>
Var<T> scale(const Var<T>& x, T c) {
  Tensor<T> out = x->value;
  for (T& v : out.data) v *= c;
  return make_result<T>(std::move(out), {x}, [c](Node<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad().data;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += c * self.grad.data[i];
  });
}

template <class T>
Var<T> square(const Var<T>& x) {
  Tensor<T> out = x->value;
  for (T& v : out.data) v *= v;
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& x = *self.inputs[0];
    auto& dx = x.ensure_grad().data;
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += T(2) * x.value.data[i] * self.grad.data[i];
  });
}

template <class T>
Var<T> sum(const Var<T>& x) {
  double acc = 0.0;
  for (T v : x->value.data) acc += v;
  return make_result<T>(Tensor<T>({1}, static_cast<T>(acc)), {x}, [](Node<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad().data;
    for (T& v : dx) v += self.grad.data[0];
  });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  probcast::detail::require(x->value.size() > 0, "mean of an empty tensor");
  return scale(sum(x), static_cast<T>(1.0 / static_cast<double>(x->value.size())));
}

/// Softmax over axis 1 of a (batch, classes, ...) tensor, max-subtracted.
template <class T>
Var<T> softmax(const Var<T>& x) {
  const auto& s = x->value.shape;
  probcast::detail::require(s.size() >= 2, "softmax needs a class axis");
  const std::size_t batch = s[0], classes = s[1], inner = x->value.size() / std::max<std::size_t>(1, batch * classes);
  Tensor<T> out(s);
  std::vector<double> e(classes);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t p = 0; p < inner; ++p) {
      const T* in = x->value.data.data() + b * classes * inner + p;
      T* o = out.data.data() + b * classes * inner + p;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < classes; ++c) mx = std::max(mx, static_cast<double>(in[c * inner]));
      double z = 0.0;
      for (std::size_t c = 0; c < classes; ++c) z += e[c] = std::exp(static_cast<double>(in[c * inner]) - mx);
      for (std::size_t c = 0; c < classes; ++c) o[c * inner] = static_cast<T>(e[c] / z);
    }
  return make_result<T>(std::move(out), {x}, [batch, classes, inner](Node<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad().data;
    const T* y = self.value.data.data();
    const T* dy = self.grad.data.data();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t p = 0; p < inner; ++p) {
        const std::size_t base = b * classes * inner + p;
        double dot = 0.0;
        for (std::size_t c = 0; c < classes; ++c) dot += static_cast<double>(dy[base + c * inner]) * y[base + c * inner];
        for (std::size_t c = 0; c < classes; ++c) {
          const std::size_t i = base + c * inner;
          dx[i] += static_cast<T>(y[i] * (dy[i] - dot));
        }
      }
  });
}

/// Mean over batch and positions of -ln max(p[target], 1e-12). `targets` is
/// (batch, positions) flattened.
template <class T>
Var<T> sparse_categorical_cross_entropy(const Var<T>& probs, std::span<const std::int32_t> targets) {
  const auto& s = probs->value.shape;
  probcast::detail::require(s.size() >= 2, "cross entropy needs a class axis");
  const std::size_t batch = s[0], classes = s[1], inner = probs->value.size() / std::max<std::size_t>(1, batch * classes);
  probcast::detail::require(targets.size() == batch * inner, "cross entropy: target count does not match predictions");
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t p = 0; p < inner; ++p) {
      const std::int32_t t = targets[b * inner + p];
      if (t < 0 || static_cast<std::size_t>(t) >= classes)
        throw InvalidArgument("target bin " + std::to_string(t) + " outside [0, " + std::to_string(classes) + ")");
      const double q = probs->value.data[(b * classes + static_cast<std::size_t>(t)) * inner + p];
      loss -= std::log(std::max(q, kProbFloor));
    }
  const double n = static_cast<double>(batch * inner);
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  return make_result<T>(Tensor<T>({1}, static_cast<T>(loss / n)), {probs},
                        [tgt = std::move(tgt), batch, classes, inner, n](Node<T>& self) {
                          auto& in = *self.inputs[0];
                          auto& dp = in.ensure_grad().data;
                          const double g = self.grad.data[0] / n;
                          for (std::size_t b = 0; b < batch; ++b)
                            for (std::size_t p = 0; p < inner; ++p) {
                              const std::size_t i =
                                  (b * classes + static_cast<std::size_t>(tgt[b * inner + p])) * inner + p;
                              const double q = in.value.data[i];
                              if (q > kProbFloor) dp[i] += static_cast<T>(-g / q);
                            }
                        });
}

template <class T>
Var<T> mse_loss(const Var<T>& pred, const Var<T>& target) {
  probcast::detail::require(pred->value.shape == target->value.shape, "mse_loss: shape mismatch " +
                                                                 shape_string(pred->value.shape) + " vs " +
                                                                 shape_string(target->value.shape));
  probcast::detail::require(pred->value.size() > 0, "mse_loss of empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred->value.size(); ++i) {
    const double d = static_cast<double>(pred->value.data[i]) - target->value.data[i];
    acc += d * d;
  }
  const double n = static_cast<double>(pred->value.size());
  return make_result<T>(Tensor<T>({1}, static_cast<T>(acc / n)), {pred, target}, [n](Node<T>& self) {
    auto& p = *self.inputs[0];
    auto& t = *self.inputs[1];
    const double g = 2.0 * self.grad.data[0] / n;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T d = static_cast<T>(g * (static_cast<double>(p.value.data[i]) - t.value.data[i]));
      if (p.requires_grad) p.ensure_grad().data[i] += d;
      if (t.requires_grad) t.ensure_grad().data[i] -= d;
    }
  });
}

struct NormOptions {
  double momentum = 0.99;
  double eps = 1e-3;
};

/// Per-channel batch normalization of (batch, channel, ...). In training
/// mode batch statistics are used and the running buffers are updated; in
/// inference mode the running statistics are used.
template <class T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, NormOptions opt = {}) {
  const auto& s = x->value.shape;
  probcast::detail::require(s.size() >= 2, "batch_norm needs a channel axis");
  const std::size_t batch = s[0], ch = s[1], inner = x->value.size() / std::max<std::size_t>(1, batch * ch);
  probcast::detail::require(gamma->value.shape == Shape{ch} && beta->value.shape == Shape{ch},
                  "batch_norm: gamma/beta must have one entry per channel");
  probcast::detail::require(running_mean.shape == Shape{ch} && running_var.shape == Shape{ch},
                  "batch_norm: running statistics must have one entry per channel");
  const double count = static_cast<double>(batch * inner);
  std::vector<T> xhat(x->value.size());
  std::vector<double> inv_std(ch);
  Tensor<T> out(s);
  for (std::size_t c = 0; c < ch; ++c) {
    double mu, var;
    if (training) {
      probcast::detail::require(count >= 1, "batch_norm needs at least one value per channel");
      double acc = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t p = 0; p < inner; ++p) acc += x->value.data[(b * ch + c) * inner + p];
      mu = acc / count;
      double sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t p = 0; p < inner; ++p) {
          const double d = x->value.data[(b * ch + c) * inner + p] - mu;
          sq += d * d;
        }
      var = sq / count;
      running_mean.data[c] = static_cast<T>(opt.momentum * running_mean.data[c] + (1.0 - opt.momentum) * mu);
      running_var.data[c] = static_cast<T>(opt.momentum * running_var.data[c] + (1.0 - opt.momentum) * var);
    } else {
      mu = running_mean.data[c];
      var = running_var.data[c];
    }
    inv_std[c] = 1.0 / std::sqrt(var + opt.eps);
    const double g = gamma->value.data[c], bt = beta->value.data[c];
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t p = 0; p < inner; ++p) {
        const std::size_t i = (b * ch + c) * inner + p;
        const double xh = (x->value.data[i] - mu) * inv_std[c];
        xhat[i] = static_cast<T>(xh);
        out.data[i] = static_cast<T>(g * xh + bt);
      }
  }
  return make_result<T>(std::move(out), {x, gamma, beta},
                        [xhat = std::move(xhat), inv_std = std::move(inv_std), batch, ch, inner, count,
                         training](Node<T>& self) {
                          auto& x = *self.inputs[0];
                          auto& gamma = *self.inputs[1];
                          auto& beta = *self.inputs[2];
                          const T* dy = self.grad.data.data();
                          for (std::size_t c = 0; c < ch; ++c) {
                            double sdy = 0.0, sdyx = 0.0;
                            for (std::size_t b = 0; b < batch; ++b)
                              for (std::size_t p = 0; p < inner; ++p) {
                                const std::size_t i = (b * ch + c) * inner + p;
                                sdy += dy[i];
                                sdyx += static_cast<double>(dy[i]) * xhat[i];
                              }
                            if (gamma.requires_grad) gamma.ensure_grad().data[c] += static_cast<T>(sdyx);
                            if (beta.requires_grad) beta.ensure_grad().data[c] += static_cast<T>(sdy);
                            if (!x.requires_grad) continue;
                            auto& dx = x.ensure_grad().data;
                            const double k = gamma.value.data[c] * inv_std[c];
                            const double mdy = sdy / count, mdyx = sdyx / count;
                            for (std::size_t b = 0; b < batch; ++b)
                              for (std::size_t p = 0; p < inner; ++p) {
                                const std::size_t i = (b * ch + c) * inner + p;
                                dx[i] += static_cast<T>(training ? k * (dy[i] - mdy - xhat[i] * mdyx) : k * dy[i]);
                              }
                          }
                        });
}

/// Per-sample normalization over all channels and positions, followed by a
/// per-channel affine map.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = 1e-3) {
  const auto& s = x->value.shape;
  probcast::detail::require(s.size() >= 2, "layer_norm needs a channel axis");
  const std::size_t batch = s[0], ch = s[1], inner = x->value.size() / std::max<std::size_t>(1, batch * ch);
  probcast::detail::require(gamma->value.shape == Shape{ch} && beta->value.shape == Shape{ch},
                  "layer_norm: gamma/beta must have one entry per channel");
  const std::size_t per = ch * inner;
  std::vector<T> xhat(x->value.size());
  std::vector<double> inv_std(batch);
  Tensor<T> out(s);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* in = x->value.data.data() + b * per;
    double acc = 0.0;
    for (std::size_t i = 0; i < per; ++i) acc += in[i];
    const double mu = acc / static_cast<double>(per);
    double sq = 0.0;
    for (std::size_t i = 0; i < per; ++i) sq += (in[i] - mu) * (in[i] - mu);
    inv_std[b] = 1.0 / std::sqrt(sq / static_cast<double>(per) + eps);
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t p = 0; p < inner; ++p) {
        const std::size_t i = b * per + c * inner + p;
        const double xh = (x->value.data[i] - mu) * inv_std[b];
        xhat[i] = static_cast<T>(xh);
        out.data[i] = static_cast<T>(gamma->value.data[c] * xh + beta->value.data[c]);
      }
  }
  return make_result<T>(std::move(out), {x, gamma, beta},
                        [xhat = std::move(xhat), inv_std = std::move(inv_std), batch, ch, inner, per](Node<T>& self) {
                          auto& x = *self.inputs[0];
                          auto& gamma = *self.inputs[1];
                          auto& beta = *self.inputs[2];
                          const T* dy = self.grad.data.data();
                          for (std::size_t b = 0; b < batch; ++b) {
                            double sg = 0.0, sgx = 0.0;
                            for (std::size_t c = 0; c < ch; ++c)
                              for (std::size_t p = 0; p < inner; ++p) {
                                const std::size_t i = b * per + c * inner + p;
                                const double gi = static_cast<double>(dy[i]) * gamma.value.data[c];
                                sg += gi;
                                sgx += gi * xhat[i];
                                if (gamma.requires_grad) gamma.ensure_grad().data[c] += static_cast<T>(dy[i] * xhat[i]);
                                if (beta.requires_grad) beta.ensure_grad().data[c] += dy[i];
                              }
                            if (!x.requires_grad) continue;
                            auto& dx = x.ensure_grad().data;
                            const double m1 = sg / static_cast<double>(per), m2 = sgx / static_cast<double>(per);
                            for (std::size_t c = 0; c < ch; ++c)
                              for (std::size_t p = 0; p < inner; ++p) {
                                const std::size_t i = b * per + c * inner + p;
                                const double gi = static_cast<double>(dy[i]) * gamma.value.data[c];
                                dx[i] += static_cast<T>(inv_std[b] * (gi - m1 - xhat[i] * m2));
                              }
                          }
                        });
}

}  // namespace probcast::nn
