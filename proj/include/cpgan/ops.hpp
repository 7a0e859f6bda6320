#pragma once

#include <cmath>
#include <initializer_list>
#include <vector>

#include "cpgan/graph.hpp"
#include "cpgan/kernels.hpp"
#include "cpgan/tensor.hpp"

namespace cpgan {
namespace ops {

namespace detail {

// Tape to record onto, or nullptr when recording is off for these inputs.
template <typename T>
Graph<T>* recording(std::initializer_list<const Tensor<T>*> inputs) {
  Graph<T>* g = Graph<T>::current();
  if (!g) return nullptr;
  for (const Tensor<T>* t : inputs)
    if (t->defined() && t->requires_grad()) return g;
  return nullptr;
}

template <typename T>
void arm(Graph<T>* g, std::initializer_list<const Tensor<T>*> inputs,
         Tensor<T>& out) {
  out.set_requires_grad(true);
  for (const Tensor<T>* t : inputs)
    if (t->defined()) g->touch(*t);
  g->touch(out);
}

}  // namespace detail

// ---- structural ops ----

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.extent(1) == b.extent(0),
          "matmul shape mismatch: ", shape_str(a.shape()), " x ",
          shape_str(b.shape()));
  index_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  auto out = Tensor<T>::zeros({m, n});
  matmul_ab(a.data(), b.data(), out.data(), m, k, n);
  if (auto* g = detail::recording<T>({&a, &b})) {
    detail::arm(g, {&a, &b}, out);
    g->record([a, b, out]() mutable {
      index_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
      if (a.requires_grad()) {
        std::vector<T> tmp((std::size_t)(m * k));
        matmul_abt(out.grad_data(), b.data(), tmp.data(), m, n, k);
        axpy_accum(tmp.data(), a.grad_data(), m * k);
      }
      if (b.requires_grad()) {
        std::vector<T> tmp((std::size_t)(k * n));
        matmul_atb(a.data(), out.grad_data(), tmp.data(), m, k, n);
        axpy_accum(tmp.data(), b.grad_data(), k * n);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require(a.rank() == 2, "transpose expects rank-2, got ",
          shape_str(a.shape()));
  index_t m = a.extent(0), n = a.extent(1);
  auto out = Tensor<T>::zeros({n, m});
  const T* src = a.data();
  T* dst = out.data();
  for (index_t i = 0; i < m; ++i)
    for (index_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  if (auto* g = detail::recording<T>({&a})) {
    detail::arm(g, {&a}, out);
    g->record([a, out]() mutable {
      index_t m = a.extent(0), n = a.extent(1);
      const T* go = out.grad_data();
      T* ga = a.grad_data();
      for (index_t i = 0; i < m; ++i)
        for (index_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  auto out = Tensor<T>::from_data(std::move(shape), a.values());
  if (auto* g = detail::recording<T>({&a})) {
    detail::arm(g, {&a}, out);
    g->record([a, out]() mutable {
      axpy_accum(out.grad_data(), a.grad_data(), a.numel());
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(int axis, const std::vector<Tensor<T>>& parts) {
  require(!parts.empty(), "concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  require(axis >= 0 && axis < (int)s0.size(), "concat axis ", axis,
          " out of range for rank ", s0.size());
  index_t total = 0;
  for (const auto& p : parts) {
    require(p.rank() == (int)s0.size(), "concat rank mismatch");
    for (int d = 0; d < p.rank(); ++d)
      require(d == axis || p.extent(d) == s0[(std::size_t)d],
              "concat extent mismatch on axis ", d, ": ",
              shape_str(p.shape()), " vs ", shape_str(s0));
    total += p.extent(axis);
  }
  Shape os = s0;
  os[(std::size_t)axis] = total;
  auto out = Tensor<T>::zeros(os);

  index_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[(std::size_t)d];
  for (int d = axis + 1; d < (int)s0.size(); ++d) inner *= s0[(std::size_t)d];

  index_t off = 0;
  for (const auto& p : parts) {
    index_t pa = p.extent(axis);
    const T* src = p.data();
    for (index_t o = 0; o < outer; ++o) {
      T* dst = out.data() + (o * total + off) * inner;
      const T* s = src + o * pa * inner;
      std::copy(s, s + pa * inner, dst);
    }
    off += pa;
  }

  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  Graph<T>* g = Graph<T>::current();
  if (g && any) {
    out.set_requires_grad(true);
    for (const auto& p : parts) g->touch(p);
    g->touch(out);
    g->record([parts, out, axis, outer, inner, total]() mutable {
      const T* go = out.grad_data();
      index_t off = 0;
      for (auto& p : parts) {
        index_t pa = p.extent(axis);
        if (p.requires_grad()) {
          T* gp = p.grad_data();
          for (index_t o = 0; o < outer; ++o) {
            const T* s = go + (o * total + off) * inner;
            T* d = gp + o * pa * inner;
            axpy_accum(s, d, pa * inner);
          }
        }
        off += pa;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_axis(const Tensor<T>& a, int axis, index_t start, index_t len) {
  const Shape& s = a.shape();
  require(axis >= 0 && axis < a.rank(), "slice axis ", axis,
          " out of range for rank ", a.rank());
  require(start >= 0 && len > 0 && start + len <= s[(std::size_t)axis],
          "slice [", start, ",", start + len, ") out of range on axis ", axis,
          " of ", shape_str(s));
  Shape os = s;
  os[(std::size_t)axis] = len;
  auto out = Tensor<T>::zeros(os);

  index_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[(std::size_t)d];
  for (int d = axis + 1; d < a.rank(); ++d) inner *= s[(std::size_t)d];
  index_t full = s[(std::size_t)axis];

  for (index_t o = 0; o < outer; ++o) {
    const T* src = a.data() + (o * full + start) * inner;
    std::copy(src, src + len * inner, out.data() + o * len * inner);
  }
  if (auto* g = detail::recording<T>({&a})) {
    detail::arm(g, {&a}, out);
    g->record([a, out, start, len, outer, inner, full]() mutable {
      const T* go = out.grad_data();
      T* ga = a.grad_data();
      for (index_t o = 0; o < outer; ++o)
        axpy_accum(go + o * len * inner, ga + (o * full + start) * inner,
                   len * inner);
    });
  }
  return out;
}

// ---- elementwise ----

namespace detail {

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> unary_map(const Tensor<T>& a, FwdFn fwd, BwdFn dfdx_from_xy) {
  auto out = Tensor<T>::zeros(a.shape());
  const T* x = a.data();
  T* y = out.data();
  index_t n = a.numel();
  for (index_t i = 0; i < n; ++i) y[i] = fwd(x[i]);
  if (auto* g = recording<T>({&a})) {
    arm(g, {&a}, out);
    g->record([a, out, dfdx_from_xy]() mutable {
      const T* x = a.data();
      const T* y = out.data();
      const T* go = out.grad_data();
      T* ga = a.grad_data();
      index_t n = a.numel();
      for (index_t i = 0; i < n; ++i) ga[i] += go[i] * dfdx_from_xy(x[i], y[i]);
    });
  }
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "add shape mismatch: ", shape_str(a.shape()),
          " vs ", shape_str(b.shape()));
  auto out = Tensor<T>::zeros(a.shape());
  for (index_t i = 0; i < a.numel(); ++i)
    out.data()[i] = a.data()[i] + b.data()[i];
  if (auto* g = detail::recording<T>({&a, &b})) {
    detail::arm(g, {&a, &b}, out);
    g->record([a, b, out]() mutable {
      if (a.requires_grad())
        axpy_accum(out.grad_data(), a.grad_data(), a.numel());
      if (b.requires_grad())
        axpy_accum(out.grad_data(), b.grad_data(), b.numel());
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "sub shape mismatch: ", shape_str(a.shape()),
          " vs ", shape_str(b.shape()));
  auto out = Tensor<T>::zeros(a.shape());
  for (index_t i = 0; i < a.numel(); ++i)
    out.data()[i] = a.data()[i] - b.data()[i];
  if (auto* g = detail::recording<T>({&a, &b})) {
    detail::arm(g, {&a, &b}, out);
    g->record([a, b, out]() mutable {
      const T* go = out.grad_data();
      if (a.requires_grad()) axpy_accum(go, a.grad_data(), a.numel());
      if (b.requires_grad()) {
        T* gb = b.grad_data();
        for (index_t i = 0; i < b.numel(); ++i) gb[i] -= go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "mul shape mismatch: ", shape_str(a.shape()),
          " vs ", shape_str(b.shape()));
  auto out = Tensor<T>::zeros(a.shape());
  for (index_t i = 0; i < a.numel(); ++i)
    out.data()[i] = a.data()[i] * b.data()[i];
  if (auto* g = detail::recording<T>({&a, &b})) {
    detail::arm(g, {&a, &b}, out);
    g->record([a, b, out]() mutable {
      const T* go = out.grad_data();
      if (a.requires_grad()) {
        T* ga = a.grad_data();
        const T* bv = b.data();
        for (index_t i = 0; i < a.numel(); ++i) ga[i] += go[i] * bv[i];
      }
      if (b.requires_grad()) {
        T* gb = b.grad_data();
        const T* av = a.data();
        for (index_t i = 0; i < b.numel(); ++i) gb[i] += go[i] * av[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  return detail::unary_map(
      a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
  return detail::unary_map(
      a, [c](T x) { return x * c; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return detail::unary_map(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  return detail::unary_map(
      a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary_map(
      a, [](T x) { return std::tanh(x); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary_map(
      a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary_map(
      a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  return detail::unary_map(
      a, [slope](T x) { return x > T(0) ? x : slope * x; },
      [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

// ---- softmax family (rank-2, axis 0 = down columns, 1 = along rows) ----

namespace detail {

template <typename T>
void check_axis2d(const Tensor<T>& a, int axis, const char* what) {
  require(a.rank() == 2, what, " expects rank-2, got ", shape_str(a.shape()));
  require(axis == 0 || axis == 1, what, " axis must be 0 or 1, got ", axis);
  require(a.extent(axis) > 0, what, " along empty axis");
}

}  // namespace detail

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
  detail::check_axis2d(a, axis, "softmax");
  index_t m = a.extent(0), n = a.extent(1);
  auto out = Tensor<T>::zeros(a.shape());
  const T* x = a.data();
  T* y = out.data();
  index_t slices = axis == 1 ? m : n;
  index_t len = axis == 1 ? n : m;
  index_t stride = axis == 1 ? 1 : n;
  for (index_t s = 0; s < slices; ++s) {
    const T* xs = x + (axis == 1 ? s * n : s);
    T* ys = y + (axis == 1 ? s * n : s);
    T mx = xs[0];
    for (index_t i = 1; i < len; ++i) mx = std::max(mx, xs[i * stride]);
    T z = T(0);
    for (index_t i = 0; i < len; ++i) {
      T e = std::exp(xs[i * stride] - mx);
      ys[i * stride] = e;
      z += e;
    }
    for (index_t i = 0; i < len; ++i) ys[i * stride] /= z;
  }
  if (auto* g = detail::recording<T>({&a})) {
    detail::arm(g, {&a}, out);
    g->record([a, out, axis]() mutable {
      index_t m = a.extent(0), n = a.extent(1);
      index_t slices = axis == 1 ? m : n;
      index_t len = axis == 1 ? n : m;
      index_t stride = axis == 1 ? 1 : n;
      const T* y = out.data();
      const T* go = out.grad_data();
      T* ga = a.grad_data();
      for (index_t s = 0; s < slices; ++s) {
        index_t base = axis == 1 ? s * n : s;
        T dot = T(0);
        for (index_t i = 0; i < len; ++i)
          dot += go[base + i * stride] * y[base + i * stride];
        for (index_t i = 0; i < len; ++i) {
          index_t k = base + i * stride;
          ga[k] += y[k] * (go[k] - dot);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a, int axis) {
  detail::check_axis2d(a, axis, "log_softmax");
  index_t m = a.extent(0), n = a.extent(1);
  auto out = Tensor<T>::zeros(a.shape());
  const T* x = a.data();
  T* y = out.data();
  index_t slices = axis == 1 ? m : n;
  index_t len = axis == 1 ? n : m;
  index_t stride = axis == 1 ? 1 : n;
  for (index_t s = 0; s < slices; ++s) {
    index_t base = axis == 1 ? s * n : s;
    T mx = x[base];
    for (index_t i = 1; i < len; ++i) mx = std::max(mx, x[base + i * stride]);
    T z = T(0);
    for (index_t i = 0; i < len; ++i) z += std::exp(x[base + i * stride] - mx);
    T lz = std::log(z) + mx;
    for (index_t i = 0; i < len; ++i)
      y[base + i * stride] = x[base + i * stride] - lz;
  }
  if (auto* g = detail::recording<T>({&a})) {
    detail::arm(g, {&a}, out);
    g->record([a, out, axis]() mutable {
      index_t m = a.extent(0), n = a.extent(1);
      index_t slices = axis == 1 ? m : n;
      index_t len = axis == 1 ? n : m;
      index_t stride = axis == 1 ? 1 : n;
      const T* y = out.data();
      const T* go = out.grad_data();
      T* ga = a.grad_data();
      for (index_t s = 0; s < slices; ++s) {
        index_t base = axis == 1 ? s * n : s;
        T gsum = T(0);
        for (index_t i = 0; i < len; ++i) gsum += go[base + i * stride];
        for (index_t i = 0; i < len; ++i) {
          index_t k = base + i * stride;
          ga[k] += go[k] - std::exp(y[k]) * gsum;
        }
      }
    });
  }
  return out;
}

// ---- reductions ----

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T acc = T(0);
  for (index_t i = 0; i < a.numel(); ++i) acc += a.data()[i];
  auto out = Tensor<T>::scalar(acc);
  if (auto* g = detail::recording<T>({&a})) {
    detail::arm(g, {&a}, out);
    g->record([a, out]() mutable {
      T go = out.grad_data()[0];
      T* ga = a.grad_data();
      for (index_t i = 0; i < a.numel(); ++i) ga[i] += go;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return mul_scalar(sum_all(a), T(1) / T(a.numel()));
}

// Keep-dims reduction over one axis of a rank-2 tensor: axis 1 gives (m,1),
// axis 0 gives (1,n).
template <typename T>
Tensor<T> sum_axis(const Tensor<T>& a, int axis) {
  detail::check_axis2d(a, axis, "sum_axis");
  index_t m = a.extent(0), n = a.extent(1);
  Shape os = axis == 1 ? Shape{m, 1} : Shape{1, n};
  auto out = Tensor<T>::zeros(os);
  const T* x = a.data();
  T* y = out.data();
  if (axis == 1) {
    for (index_t i = 0; i < m; ++i) {
      T acc = T(0);
      for (index_t j = 0; j < n; ++j) acc += x[i * n + j];
      y[i] = acc;
    }
  } else {
    for (index_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (index_t i = 0; i < m; ++i) acc += x[i * n + j];
      y[j] = acc;
    }
  }
  if (auto* g = detail::recording<T>({&a})) {
    detail::arm(g, {&a}, out);
    g->record([a, out, axis]() mutable {
      index_t m = a.extent(0), n = a.extent(1);
      const T* go = out.grad_data();
      T* ga = a.grad_data();
      for (index_t i = 0; i < m; ++i)
        for (index_t j = 0; j < n; ++j)
          ga[i * n + j] += axis == 1 ? go[i] : go[j];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& a, int axis) {
  T denom = T(1) / T(a.extent(axis));
  return mul_scalar(sum_axis(a, axis), denom);
}

// ---- explicit broadcast helpers ----

// a (m,n) + bias (m,1) broadcast over columns.
template <typename T>
Tensor<T> add_bias_cols(const Tensor<T>& a, const Tensor<T>& bias) {
  require(a.rank() == 2 && bias.rank() == 2 && bias.extent(1) == 1 &&
              bias.extent(0) == a.extent(0),
          "add_bias_cols shapes ", shape_str(a.shape()), " + ",
          shape_str(bias.shape()));
  index_t m = a.extent(0), n = a.extent(1);
  auto out = Tensor<T>::zeros(a.shape());
  for (index_t i = 0; i < m; ++i) {
    T bv = bias.data()[i];
    for (index_t j = 0; j < n; ++j)
      out.data()[i * n + j] = a.data()[i * n + j] + bv;
  }
  if (auto* g = detail::recording<T>({&a, &bias})) {
    detail::arm(g, {&a, &bias}, out);
    g->record([a, bias, out]() mutable {
      index_t m = a.extent(0), n = a.extent(1);
      const T* go = out.grad_data();
      if (a.requires_grad()) axpy_accum(go, a.grad_data(), m * n);
      if (bias.requires_grad()) {
        T* gb = bias.grad_data();
        for (index_t i = 0; i < m; ++i) {
          T acc = T(0);
          for (index_t j = 0; j < n; ++j) acc += go[i * n + j];
          gb[i] += acc;
        }
      }
    });
  }
  return out;
}

// x (m,1) tiled to (m,n).
template <typename T>
Tensor<T> repeat_cols(const Tensor<T>& x, index_t n) {
  require(x.rank() == 2 && x.extent(1) == 1, "repeat_cols expects (m,1), got ",
          shape_str(x.shape()));
  require(n > 0, "repeat_cols count must be positive");
  index_t m = x.extent(0);
  auto out = Tensor<T>::zeros({m, n});
  for (index_t i = 0; i < m; ++i)
    for (index_t j = 0; j < n; ++j) out.data()[i * n + j] = x.data()[i];
  if (auto* g = detail::recording<T>({&x})) {
    detail::arm(g, {&x}, out);
    g->record([x, out, n]() mutable {
      index_t m = x.extent(0);
      const T* go = out.grad_data();
      T* gx = x.grad_data();
      for (index_t i = 0; i < m; ++i) {
        T acc = T(0);
        for (index_t j = 0; j < n; ++j) acc += go[i * n + j];
        gx[i] += acc;
      }
    });
  }
  return out;
}

// Trace of a square matrix as a scalar tensor.
template <typename T>
Tensor<T> diag_sum(const Tensor<T>& a) {
  require(a.rank() == 2 && a.extent(0) == a.extent(1),
          "diag_sum expects square matrix, got ", shape_str(a.shape()));
  index_t n = a.extent(0);
  T acc = T(0);
  for (index_t i = 0; i < n; ++i) acc += a.data()[i * n + i];
  auto out = Tensor<T>::scalar(acc);
  if (auto* g = detail::recording<T>({&a})) {
    detail::arm(g, {&a}, out);
    g->record([a, out]() mutable {
      index_t n = a.extent(0);
      T go = out.grad_data()[0];
      T* ga = a.grad_data();
      for (index_t i = 0; i < n; ++i) ga[i * n + i] += go;
    });
  }
  return out;
}

// ---- row geometry ----

template <typename T>
Tensor<T> rows_l2norm(const Tensor<T>& a) {
  require(a.rank() == 2, "rows_l2norm expects rank-2, got ",
          shape_str(a.shape()));
  index_t m = a.extent(0), k = a.extent(1);
  auto out = Tensor<T>::zeros({m, 1});
  for (index_t i = 0; i < m; ++i) {
    T acc = T(0);
    for (index_t j = 0; j < k; ++j) {
      T v = a.data()[i * k + j];
      acc += v * v;
    }
    out.data()[i] = std::sqrt(acc);
  }
  if (auto* g = detail::recording<T>({&a})) {
    detail::arm(g, {&a}, out);
    g->record([a, out]() mutable {
      index_t m = a.extent(0), k = a.extent(1);
      const T* y = out.data();
      const T* go = out.grad_data();
      T* ga = a.grad_data();
      for (index_t i = 0; i < m; ++i) {
        if (y[i] <= T(1e-30)) continue;  // norm 0: subgradient 0
        T scale = go[i] / y[i];
        for (index_t j = 0; j < k; ++j)
          ga[i * k + j] += scale * a.data()[i * k + j];
      }
    });
  }
  return out;
}

// Cosine similarity of paired rows: out_i = cos(a_i, b_i), shape (m,1).
// A zero-norm row yields 0 with zero gradient.
template <typename T>
Tensor<T> cosine_rows(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape() && a.rank() == 2,
          "cosine_rows shape mismatch: ", shape_str(a.shape()), " vs ",
          shape_str(b.shape()));
  index_t m = a.extent(0), k = a.extent(1);
  auto out = Tensor<T>::zeros({m, 1});
  for (index_t i = 0; i < m; ++i) {
    const T* ai = a.data() + i * k;
    const T* bi = b.data() + i * k;
    T dot = T(0), na = T(0), nb = T(0);
    for (index_t j = 0; j < k; ++j) {
      dot += ai[j] * bi[j];
      na += ai[j] * ai[j];
      nb += bi[j] * bi[j];
    }
    T denom = std::sqrt(na) * std::sqrt(nb);
    if (denom <= T(1e-30)) {
      log_debug("cosine_rows: zero-norm row ", i, ", similarity set to 0");
      out.data()[i] = T(0);
    } else {
      out.data()[i] = dot / denom;
    }
  }
  if (auto* g = detail::recording<T>({&a, &b})) {
    detail::arm(g, {&a, &b}, out);
    g->record([a, b, out]() mutable {
      index_t m = a.extent(0), k = a.extent(1);
      const T* go = out.grad_data();
      for (index_t i = 0; i < m; ++i) {
        const T* ai = a.data() + i * k;
        const T* bi = b.data() + i * k;
        T na = T(0), nb = T(0);
        for (index_t j = 0; j < k; ++j) {
          na += ai[j] * ai[j];
          nb += bi[j] * bi[j];
        }
        T sna = std::sqrt(na), snb = std::sqrt(nb);
        T denom = sna * snb;
        if (denom <= T(1e-30)) continue;
        T c = out.data()[i];
        T gi = go[i];
        if (a.requires_grad()) {
          T* ga = a.grad_data() + i * k;
          for (index_t j = 0; j < k; ++j)
            ga[j] += gi * (bi[j] / denom - c * ai[j] / na);
        }
        if (b.requires_grad()) {
          T* gb = b.grad_data() + i * k;
          for (index_t j = 0; j < k; ++j)
            gb[j] += gi * (ai[j] / denom - c * bi[j] / nb);
        }
      }
    });
  }
  return out;
}

// ---- embedding lookup ----

// Selects rows of table (V,d) by index, producing (n,d). Duplicate indices
// accumulate gradient into the same row.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table,
                      const std::vector<index_t>& indices) {
  require(table.rank() == 2, "gather_rows expects rank-2 table, got ",
          shape_str(table.shape()));
  require(!indices.empty(), "gather_rows with no indices");
  index_t v = table.extent(0), d = table.extent(1);
  for (index_t ix : indices)
    require(ix >= 0 && ix < v, "gather_rows index ", ix, " out of range [0,", v,
            ")");
  auto out = Tensor<T>::zeros({(index_t)indices.size(), d});
  for (std::size_t i = 0; i < indices.size(); ++i)
    std::copy(table.data() + indices[i] * d, table.data() + (indices[i] + 1) * d,
              out.data() + (index_t)i * d);
  if (auto* g = detail::recording<T>({&table})) {
    detail::arm(g, {&table}, out);
    g->record([table, out, indices]() mutable {
      index_t d = table.extent(1);
      const T* go = out.grad_data();
      T* gt = table.grad_data();
      for (std::size_t i = 0; i < indices.size(); ++i)
        axpy_accum(go + (index_t)i * d, gt + indices[i] * d, d);
    });
  }
  return out;
}

// ---- convolution and spatial ops ----

namespace detail {

template <typename T>
void im2col(const T* x, index_t cin, index_t h, index_t w, index_t kh,
            index_t kw, index_t stride, index_t pad, index_t ho, index_t wo,
            T* col) {
  index_t p = ho * wo;
  for (index_t c = 0; c < cin; ++c) {
    const T* plane = x + c * h * w;
    for (index_t ki = 0; ki < kh; ++ki) {
      for (index_t kj = 0; kj < kw; ++kj) {
        T* row = col + ((c * kh + ki) * kw + kj) * p;
        for (index_t oh = 0; oh < ho; ++oh) {
          index_t ih = oh * stride + ki - pad;
          for (index_t ow = 0; ow < wo; ++ow) {
            index_t iw = ow * stride + kj - pad;
            row[oh * wo + ow] = (ih >= 0 && ih < h && iw >= 0 && iw < w)
                                    ? plane[ih * w + iw]
                                    : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_accum(const T* col, index_t cin, index_t h, index_t w, index_t kh,
                  index_t kw, index_t stride, index_t pad, index_t ho,
                  index_t wo, T* x) {
  index_t p = ho * wo;
  for (index_t c = 0; c < cin; ++c) {
    T* plane = x + c * h * w;
    for (index_t ki = 0; ki < kh; ++ki) {
      for (index_t kj = 0; kj < kw; ++kj) {
        const T* row = col + ((c * kh + ki) * kw + kj) * p;
        for (index_t oh = 0; oh < ho; ++oh) {
          index_t ih = oh * stride + ki - pad;
          if (ih < 0 || ih >= h) continue;
          for (index_t ow = 0; ow < wo; ++ow) {
            index_t iw = ow * stride + kj - pad;
            if (iw < 0 || iw >= w) continue;
            plane[ih * w + iw] += row[oh * wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

// x (N,Cin,H,W) * w (O,Cin,kh,kw) + b (O, optional undefined). im2col per
// image, matmul against the flattened kernel. Weight/bias gradients
// accumulate sequentially over images so results do not depend on thread
// count.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 index_t stride, index_t pad) {
  require(x.rank() == 4 && w.rank() == 4, "conv2d expects rank-4 x and w, got ",
          shape_str(x.shape()), " and ", shape_str(w.shape()));
  require(x.extent(1) == w.extent(1), "conv2d channel mismatch: ",
          shape_str(x.shape()), " vs ", shape_str(w.shape()));
  require(stride >= 1 && pad >= 0, "conv2d bad stride/pad ", stride, "/", pad);
  index_t n = x.extent(0), cin = x.extent(1), h = x.extent(2), wd = x.extent(3);
  index_t o = w.extent(0), kh = w.extent(2), kw = w.extent(3);
  index_t ho = (h + 2 * pad - kh) / stride + 1;
  index_t wo = (wd + 2 * pad - kw) / stride + 1;
  require(ho > 0 && wo > 0, "conv2d output would be empty for input ",
          shape_str(x.shape()), " kernel ", shape_str(w.shape()));
  if (b.defined())
    require(b.rank() == 1 && b.extent(0) == o, "conv2d bias shape ",
            shape_str(b.shape()), " for ", o, " output channels");

  index_t ckk = cin * kh * kw, p = ho * wo;
  auto out = Tensor<T>::zeros({n, o, ho, wo});
  parallel_for(n, [&](index_t n0, index_t n1) {
    std::vector<T> col((std::size_t)(ckk * p));
    for (index_t img = n0; img < n1; ++img) {
      detail::im2col(x.data() + img * cin * h * wd, cin, h, wd, kh, kw, stride,
                     pad, ho, wo, col.data());
      T* y = out.data() + img * o * p;
      matmul_ab(w.data(), col.data(), y, o, ckk, p);
      if (b.defined())
        for (index_t oc = 0; oc < o; ++oc) {
          T bv = b.data()[oc];
          for (index_t px = 0; px < p; ++px) y[oc * p + px] += bv;
        }
    }
  });

  Graph<T>* g = Graph<T>::current();
  bool want = g && (x.requires_grad() || w.requires_grad() ||
                    (b.defined() && b.requires_grad()));
  if (want) {
    out.set_requires_grad(true);
    g->touch(x);
    g->touch(w);
    if (b.defined()) g->touch(b);
    g->touch(out);
    g->record([x, w, b, out, stride, pad, ho, wo]() mutable {
      index_t n = x.extent(0), cin = x.extent(1), h = x.extent(2),
              wd = x.extent(3);
      index_t o = w.extent(0), kh = w.extent(2), kw = w.extent(3);
      index_t ckk = cin * kh * kw, p = ho * wo;
      const T* go = out.grad_data();
      if (x.requires_grad()) {
        parallel_for(n, [&](index_t n0, index_t n1) {
          std::vector<T> colg((std::size_t)(ckk * p));
          for (index_t img = n0; img < n1; ++img) {
            matmul_atb(w.data(), go + img * o * p, colg.data(), o, ckk, p);
            detail::col2im_accum(colg.data(), cin, h, wd, kh, kw, stride, pad,
                                 ho, wo, x.grad_data() + img * cin * h * wd);
          }
        });
      }
      if (w.requires_grad()) {
        std::vector<T> col((std::size_t)(ckk * p));
        std::vector<T> tmp((std::size_t)(o * ckk));
        for (index_t img = 0; img < n; ++img) {
          detail::im2col(x.data() + img * cin * h * wd, cin, h, wd, kh, kw,
                         stride, pad, ho, wo, col.data());
          matmul_abt(go + img * o * p, col.data(), tmp.data(), o, p, ckk);
          axpy_accum(tmp.data(), w.grad_data(), o * ckk);
        }
      }
      if (b.defined() && b.requires_grad()) {
        T* gb = b.grad_data();
        for (index_t img = 0; img < n; ++img)
          for (index_t oc = 0; oc < o; ++oc) {
            const T* row = go + (img * o + oc) * p;
            T acc = T(0);
            for (index_t px = 0; px < p; ++px) acc += row[px];
            gb[oc] += acc;
          }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  require(x.rank() == 4, "upsample_nearest2x expects rank-4, got ",
          shape_str(x.shape()));
  index_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  auto out = Tensor<T>::zeros({n, c, 2 * h, 2 * w});
  index_t planes = n * c;
  parallel_for(planes, [&](index_t p0, index_t p1) {
    for (index_t pl = p0; pl < p1; ++pl) {
      const T* src = x.data() + pl * h * w;
      T* dst = out.data() + pl * 4 * h * w;
      for (index_t i = 0; i < h; ++i)
        for (index_t j = 0; j < w; ++j) {
          T v = src[i * w + j];
          T* d = dst + (2 * i) * 2 * w + 2 * j;
          d[0] = v;
          d[1] = v;
          d[2 * w] = v;
          d[2 * w + 1] = v;
        }
    }
  });
  if (auto* g = detail::recording<T>({&x})) {
    detail::arm(g, {&x}, out);
    g->record([x, out]() mutable {
      index_t n = x.extent(0), c = x.extent(1), h = x.extent(2),
              w = x.extent(3);
      index_t planes = n * c;
      parallel_for(planes, [&](index_t p0, index_t p1) {
        for (index_t pl = p0; pl < p1; ++pl) {
          const T* go = out.grad_data() + pl * 4 * h * w;
          T* gx = x.grad_data() + pl * h * w;
          for (index_t i = 0; i < h; ++i)
            for (index_t j = 0; j < w; ++j) {
              const T* s = go + (2 * i) * 2 * w + 2 * j;
              gx[i * w + j] += s[0] + s[1] + s[2 * w] + s[2 * w + 1];
            }
        }
      });
    });
  }
  return out;
}

// Box-filter downsample by an integer factor; used to build the real-image
// pyramid for the lower stages.
template <typename T>
Tensor<T> avgpool_box(const Tensor<T>& x, index_t factor) {
  require(x.rank() == 4, "avgpool_box expects rank-4, got ",
          shape_str(x.shape()));
  index_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  require(factor >= 1 && h % factor == 0 && w % factor == 0,
          "avgpool_box factor ", factor, " does not divide ",
          shape_str(x.shape()));
  index_t ho = h / factor, wo = w / factor;
  auto out = Tensor<T>::zeros({n, c, ho, wo});
  T inv = T(1) / T(factor * factor);
  index_t planes = n * c;
  parallel_for(planes, [&](index_t p0, index_t p1) {
    for (index_t pl = p0; pl < p1; ++pl) {
      const T* src = x.data() + pl * h * w;
      T* dst = out.data() + pl * ho * wo;
      for (index_t i = 0; i < ho; ++i)
        for (index_t j = 0; j < wo; ++j) {
          T acc = T(0);
          for (index_t di = 0; di < factor; ++di)
            for (index_t dj = 0; dj < factor; ++dj)
              acc += src[(i * factor + di) * w + j * factor + dj];
          dst[i * wo + j] = acc * inv;
        }
    }
  });
  if (auto* g = detail::recording<T>({&x})) {
    detail::arm(g, {&x}, out);
    g->record([x, out, factor]() mutable {
      index_t n = x.extent(0), c = x.extent(1), h = x.extent(2),
              w = x.extent(3);
      index_t ho = h / factor, wo = w / factor;
      T inv = T(1) / T(factor * factor);
      index_t planes = n * c;
      parallel_for(planes, [&](index_t p0, index_t p1) {
        for (index_t pl = p0; pl < p1; ++pl) {
          const T* go = out.grad_data() + pl * ho * wo;
          T* gx = x.grad_data() + pl * h * w;
          for (index_t i = 0; i < ho; ++i)
            for (index_t j = 0; j < wo; ++j) {
              T gv = go[i * wo + j] * inv;
              for (index_t di = 0; di < factor; ++di)
                for (index_t dj = 0; dj < factor; ++dj)
                  gx[(i * factor + di) * w + j * factor + dj] += gv;
            }
        }
      });
    });
  }
  return out;
}

// Crops box (x0,y0,x1,y1) in normalized [0,1] coordinates from x (C,H,W) and
// resamples to (C,oh,ow) bilinearly. Sample positions depend only on the box,
// so output is linear in x.
template <typename T>
Tensor<T> crop_resize_bilinear(const Tensor<T>& x, double bx0, double by0,
                               double bx1, double by1, index_t oh, index_t ow) {
  require(x.rank() == 3, "crop_resize_bilinear expects (C,H,W), got ",
          shape_str(x.shape()));
  require(bx1 > bx0 && by1 > by0, "degenerate crop box [", bx0, ",", by0, ",",
          bx1, ",", by1, "]");
  require(oh > 0 && ow > 0, "crop_resize_bilinear empty output");
  index_t c = x.extent(0), h = x.extent(1), w = x.extent(2);

  // Per output pixel: source position, 4 integer taps, 4 weights.
  std::vector<index_t> tap(4 * (std::size_t)(oh * ow));
  std::vector<T> wt(4 * (std::size_t)(oh * ow));
  auto clampi = [](double v, double lo, double hi) {
    return v < lo ? lo : (v > hi ? hi : v);
  };
  for (index_t i = 0; i < oh; ++i) {
    double ty = oh == 1 ? 0.5 : (double)i / (double)(oh - 1);
    double sy = clampi((by0 + (by1 - by0) * ty) * (double)(h - 1), 0, h - 1);
    index_t y0i = (index_t)sy;
    if (y0i >= h - 1) y0i = h > 1 ? h - 2 : 0;
    double fy = h > 1 ? sy - (double)y0i : 0.0;
    for (index_t j = 0; j < ow; ++j) {
      double tx = ow == 1 ? 0.5 : (double)j / (double)(ow - 1);
      double sx = clampi((bx0 + (bx1 - bx0) * tx) * (double)(w - 1), 0, w - 1);
      index_t x0i = (index_t)sx;
      if (x0i >= w - 1) x0i = w > 1 ? w - 2 : 0;
      double fx = w > 1 ? sx - (double)x0i : 0.0;
      std::size_t k = 4 * (std::size_t)(i * ow + j);
      index_t x1i = w > 1 ? x0i + 1 : x0i;
      index_t y1i = h > 1 ? y0i + 1 : y0i;
      tap[k + 0] = y0i * w + x0i;
      tap[k + 1] = y0i * w + x1i;
      tap[k + 2] = y1i * w + x0i;
      tap[k + 3] = y1i * w + x1i;
      wt[k + 0] = T((1 - fy) * (1 - fx));
      wt[k + 1] = T((1 - fy) * fx);
      wt[k + 2] = T(fy * (1 - fx));
      wt[k + 3] = T(fy * fx);
    }
  }

  auto out = Tensor<T>::zeros({c, oh, ow});
  for (index_t ch = 0; ch < c; ++ch) {
    const T* src = x.data() + ch * h * w;
    T* dst = out.data() + ch * oh * ow;
    for (index_t px = 0; px < oh * ow; ++px) {
      std::size_t k = 4 * (std::size_t)px;
      dst[px] = wt[k] * src[tap[k]] + wt[k + 1] * src[tap[k + 1]] +
                wt[k + 2] * src[tap[k + 2]] + wt[k + 3] * src[tap[k + 3]];
    }
  }
  if (auto* g = detail::recording<T>({&x})) {
    detail::arm(g, {&x}, out);
    g->record([x, out, tap, wt, oh, ow]() mutable {
      index_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
      for (index_t ch = 0; ch < c; ++ch) {
        const T* go = out.grad_data() + ch * oh * ow;
        T* gx = x.grad_data() + ch * h * w;
        for (index_t px = 0; px < oh * ow; ++px) {
          std::size_t k = 4 * (std::size_t)px;
          gx[tap[k]] += wt[k] * go[px];
          gx[tap[k + 1]] += wt[k + 1] * go[px];
          gx[tap[k + 2]] += wt[k + 2] * go[px];
          gx[tap[k + 3]] += wt[k + 3] * go[px];
        }
      }
    });
  }
  return out;
}

// ---- non-differentiable utilities ----

// First index of the maximum (ties to the lowest index).
template <typename T>
index_t argmax_n(const T* v, index_t n) {
  index_t best = 0;
  for (index_t i = 1; i < n; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

template <typename T>
index_t argmax(const Tensor<T>& t) {
  return argmax_n(t.data(), t.numel());
}

// Indices of the k largest values, ordered by value descending then index
// ascending.
template <typename T>
std::vector<index_t> topk_indices(const std::vector<T>& v, index_t k) {
  std::vector<index_t> idx(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) idx[i] = (index_t)i;
  std::stable_sort(idx.begin(), idx.end(), [&](index_t a, index_t b) {
    if (v[(std::size_t)a] != v[(std::size_t)b])
      return v[(std::size_t)a] > v[(std::size_t)b];
    return a < b;
  });
  if ((index_t)idx.size() > k) idx.resize((std::size_t)k);
  return idx;
}

// ---- conveniences (compositions, no own backward) ----

// W (out,in) x + b (out,1) with columns as samples.
template <typename T>
Tensor<T> affine(const Tensor<T>& w, const Tensor<T>& x, const Tensor<T>& b) {
  return add_bias_cols(matmul(w, x), b);
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, index_t start, index_t len) {
  return slice_axis(a, 0, start, len);
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, index_t start, index_t len) {
  return slice_axis(a, 1, start, len);
}

}  // namespace ops
}  // namespace cpgan
