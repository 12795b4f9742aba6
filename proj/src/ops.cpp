#include <algorithm>
#include <cmath>
#include <numbers>

#include "mivolo/tensor.hpp"

namespace mivolo {

namespace {

using detail::make_result;
using detail::wants_grad;

void require(bool ok, const std::string& what) {
  if (!ok) throw DimensionError(what);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

void accumulate(TensorImpl& t, const std::vector<double>& g) {
  if (!t.requires_grad) return;
  t.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) t.grad[i] += g[i];
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x k] += a[m x n] * b[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      c[i * k + p] += acc;
    }
  }
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  const bool tracked = wants_grad({&a, &b});
  Tensor result = make_result({m, n}, std::move(out), tracked);
  if (tracked) {
    Tape::active()->record({a.impl(), b.impl()}, result.impl(),
                           [A = a.impl(), B = b.impl(), m, k, n](const TensorImpl& o) {
                             if (A->requires_grad) {
                               A->ensure_grad();
                               gemm_nt(o.grad.data(), B->data.data(), A->grad.data(), m, n, k);
                             }
                             if (B->requires_grad) {
                               B->ensure_grad();
                               gemm_tn(A->data.data(), o.grad.data(), B->grad.data(), m, k, n);
                             }
                           });
  }
  return result;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  require(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1),
          "bmm: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t i = 0; i < batch; ++i)
    gemm_nn(a.data().data() + i * m * k, b.data().data() + i * k * n, out.data() + i * m * n, m,
            k, n);
  const bool tracked = wants_grad({&a, &b});
  Tensor result = make_result({batch, m, n}, std::move(out), tracked);
  if (tracked) {
    Tape::active()->record(
        {a.impl(), b.impl()}, result.impl(),
        [A = a.impl(), B = b.impl(), batch, m, k, n](const TensorImpl& o) {
          if (A->requires_grad) A->ensure_grad();
          if (B->requires_grad) B->ensure_grad();
          for (std::size_t i = 0; i < batch; ++i) {
            const double* g = o.grad.data() + i * m * n;
            if (A->requires_grad)
              gemm_nt(g, B->data.data() + i * k * n, A->grad.data() + i * m * k, m, n, k);
            if (B->requires_grad)
              gemm_tn(A->data.data() + i * m * k, g, B->grad.data() + i * k * n, m, k, n);
          }
        });
  }
  return result;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require(w.rank() == 2 && x.rank() >= 1 && x.shape().back() == w.dim(0),
          "linear: input " + shape_str(x.shape()) + " incompatible with weight " +
              shape_str(w.shape()));
  const std::size_t in = w.dim(0), outw = w.dim(1), rows = x.numel() / in;
  if (bias.defined())
    require(bias.numel() == outw, "linear: bias " + shape_str(bias.shape()) +
                                      " does not match weight " + shape_str(w.shape()));
  std::vector<double> out(rows * outw, 0.0);
  if (bias.defined())
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(bias.data().begin(), bias.data().end(), out.begin() + r * outw);
  gemm_nn(x.data().data(), w.data().data(), out.data(), rows, in, outw);
  Shape shape = x.shape();
  shape.back() = outw;
  const bool tracked = wants_grad({&x, &w, &bias});
  Tensor result = make_result(std::move(shape), std::move(out), tracked);
  if (tracked) {
    std::vector<Tape::ImplPtr> inputs{x.impl(), w.impl()};
    if (bias.defined()) inputs.push_back(bias.impl());
    Tape::active()->record(
        std::move(inputs), result.impl(),
        [X = x.impl(), W = w.impl(), Bi = bias.defined() ? bias.impl() : nullptr, rows, in,
         outw](const TensorImpl& o) {
          if (X->requires_grad) {
            X->ensure_grad();
            gemm_nt(o.grad.data(), W->data.data(), X->grad.data(), rows, outw, in);
          }
          if (W->requires_grad) {
            W->ensure_grad();
            gemm_tn(X->data.data(), o.grad.data(), W->grad.data(), rows, in, outw);
          }
          if (Bi && Bi->requires_grad) {
            Bi->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < outw; ++j) Bi->grad[j] += o.grad[r * outw + j];
          }
        });
  }
  return result;
}

namespace {

template <class Fwd, class Bwd>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, name);
  std::vector<double> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  const bool tracked = wants_grad({&a, &b});
  Tensor result = make_result(a.shape(), std::move(out), tracked);
  if (tracked) {
    Tape::active()->record({a.impl(), b.impl()}, result.impl(),
                           [A = a.impl(), B = b.impl(), bwd](const TensorImpl& o) {
                             if (A->requires_grad) A->ensure_grad();
                             if (B->requires_grad) B->ensure_grad();
                             for (std::size_t i = 0; i < o.grad.size(); ++i) {
                               auto [ga, gb] = bwd(A->data[i], B->data[i], o.grad[i]);
                               if (A->requires_grad) A->grad[i] += ga;
                               if (B->requires_grad) B->grad[i] += gb;
                             }
                           });
  }
  return result;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double g) { return std::pair{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double g) { return std::pair{g, -g}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double g) { return std::pair{g * y, g * x}; });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  const bool tracked = wants_grad({&x});
  Tensor result = make_result(x.shape(), std::move(out), tracked);
  if (tracked) {
    Tape::active()->record({x.impl()}, result.impl(), [X = x.impl(), factor](const TensorImpl& o) {
      X->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) X->grad[i] += factor * o.grad[i];
    });
  }
  return result;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = bias.numel();
  require(x.rank() >= 1 && x.shape().back() == n,
          "add_bias: " + shape_str(x.shape()) + " vs bias " + shape_str(bias.shape()));
  std::vector<double> out(x.data().begin(), x.data().end());
  auto bv = bias.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
  const bool tracked = wants_grad({&x, &bias});
  Tensor result = make_result(x.shape(), std::move(out), tracked);
  if (tracked) {
    Tape::active()->record({x.impl(), bias.impl()}, result.impl(),
                           [X = x.impl(), B = bias.impl(), n](const TensorImpl& o) {
                             if (X->requires_grad) accumulate(*X, o.grad);
                             if (B->requires_grad) {
                               B->ensure_grad();
                               for (std::size_t i = 0; i < o.grad.size(); ++i)
                                 B->grad[i % n] += o.grad[i];
                             }
                           });
  }
  return result;
}

Tensor gelu(const Tensor& x) {
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * inv_sqrt2));
  const bool tracked = wants_grad({&x});
  Tensor result = make_result(x.shape(), std::move(out), tracked);
  if (tracked) {
    Tape::active()->record({x.impl()}, result.impl(), [X = x.impl(), inv_sqrt2](const TensorImpl& o) {
      X->ensure_grad();
      const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      for (std::size_t i = 0; i < o.grad.size(); ++i) {
        const double v = X->data[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        X->grad[i] += o.grad[i] * (cdf + v * pdf);
      }
    });
  }
  return result;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  require(axis < x.rank(), "softmax: axis " + std::to_string(axis) + " out of range for " +
                               shape_str(x.shape()));
  const AxisSplit s = split_at(x.shape(), axis);
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      double mx = xv[base];
      for (std::size_t j = 1; j < s.len; ++j) mx = std::max(mx, xv[base + j * s.inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < s.len; ++j) {
        const double e = std::exp(xv[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        total += e;
      }
      const double inv = 1.0 / total;
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] *= inv;
    }
  }
  const bool tracked = wants_grad({&x});
  Tensor result = make_result(x.shape(), std::move(out), tracked);
  if (tracked) {
    Tape::active()->record({x.impl()}, result.impl(), [X = x.impl(), s](const TensorImpl& o) {
      X->ensure_grad();
      for (std::size_t a = 0; a < s.outer; ++a) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = a * s.len * s.inner + in;
          double dot = 0.0;
          for (std::size_t j = 0; j < s.len; ++j) {
            const std::size_t idx = base + j * s.inner;
            dot += o.grad[idx] * o.data[idx];
          }
          for (std::size_t j = 0; j < s.len; ++j) {
            const std::size_t idx = base + j * s.inner;
            X->grad[idx] += o.data[idx] * (o.grad[idx] - dot);
          }
        }
      }
    });
  }
  return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require(x.rank() >= 1, "layer_norm: scalar input");
  const std::size_t n = x.shape().back();
  require(gamma.numel() == n && beta.numel() == n,
          "layer_norm: gamma/beta " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
              " do not match last axis of " + shape_str(x.shape()));
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.numel()), xhat(x.numel()), rstd(rows);
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mean) * rstd[r];
      xhat[r * n + j] = h;
      out[r * n + j] = h * gv[j] + bv[j];
    }
  }
  const bool tracked = wants_grad({&x, &gamma, &beta});
  Tensor result = make_result(x.shape(), std::move(out), tracked);
  if (tracked) {
    Tape::active()->record(
        {x.impl(), gamma.impl(), beta.impl()}, result.impl(),
        [X = x.impl(), G = gamma.impl(), B = beta.impl(), xhat = std::move(xhat),
         rstd = std::move(rstd), rows, n](const TensorImpl& o) {
          if (X->requires_grad) X->ensure_grad();
          if (G->requires_grad) G->ensure_grad();
          if (B->requires_grad) B->ensure_grad();
          std::vector<double> dxhat(n);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* g = o.grad.data() + r * n;
            const double* h = xhat.data() + r * n;
            double sum_d = 0.0, sum_dh = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              dxhat[j] = g[j] * G->data[j];
              sum_d += dxhat[j];
              sum_dh += dxhat[j] * h[j];
              if (G->requires_grad) G->grad[j] += g[j] * h[j];
              if (B->requires_grad) B->grad[j] += g[j];
            }
            if (X->requires_grad) {
              const double inv_n = 1.0 / static_cast<double>(n);
              for (std::size_t j = 0; j < n; ++j)
                X->grad[r * n + j] +=
                    rstd[r] * (dxhat[j] - inv_n * sum_d - h[j] * inv_n * sum_dh);
            }
          }
        });
  }
  return result;
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  require(shape_numel(shape) == x.numel(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  for (auto d : shape) require(d > 0, "reshape: zero dimension in " + shape_str(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  const bool tracked = wants_grad({&x});
  Tensor result = make_result(shape, std::move(out), tracked);
  if (tracked) {
    Tape::active()->record({x.impl()}, result.impl(),
                           [X = x.impl()](const TensorImpl& o) { accumulate(*X, o.grad); });
  }
  return result;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const std::size_t rank = x.rank();
  require(order.size() == rank, "permute: order length does not match rank of " +
                                    shape_str(x.shape()));
  std::vector<bool> seen(rank, false);
  for (auto a : order) {
    require(a < rank && !seen[a], "permute: invalid axis order");
    seen[a] = true;
  }
  const Shape& in_shape = x.shape();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(rank);
  std::vector<std::size_t> step(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[order[i]];
    step[i] = in_strides[order[i]];
  }
  // source index for each output position
  std::vector<std::size_t> src(x.numel());
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < src.size(); ++flat) {
    src[flat] = offset;
    for (std::size_t d = rank; d-- > 0;) {
      if (++counter[d] < out_shape[d]) {
        offset += step[d];
        break;
      }
      offset -= step[d] * (out_shape[d] - 1);
      counter[d] = 0;
    }
  }
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[src[i]];
  const bool tracked = wants_grad({&x});
  Tensor result = make_result(std::move(out_shape), std::move(out), tracked);
  if (tracked) {
    Tape::active()->record({x.impl()}, result.impl(),
                           [X = x.impl(), src = std::move(src)](const TensorImpl& o) {
                             X->ensure_grad();
                             for (std::size_t i = 0; i < src.size(); ++i)
                               X->grad[src[i]] += o.grad[i];
                           });
  }
  return result;
}

Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1) {
  require(axis0 < x.rank() && axis1 < x.rank(), "transpose: axis out of range for " +
                                                    shape_str(x.shape()));
  std::vector<std::size_t> order(x.rank());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::swap(order[axis0], order[axis1]);
  return permute(x, order);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts.front().shape();
  require(axis < first.size(), "concat: axis out of range for " + shape_str(first));
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.rank() == first.size(), "concat: rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d)
      if (d != axis)
        require(p.dim(d) == first[d], "concat: shape mismatch " + shape_str(first) + " vs " +
                                          shape_str(p.shape()));
    total += p.dim(axis);
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  const AxisSplit s = split_at(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.dim(axis);
    auto pv = p.data();
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(pv.begin() + o * len * s.inner, len * s.inner,
                  out.begin() + (o * total + offset) * s.inner);
    offset += len;
  }
  bool tracked = false;
  if (Tape::active())
    for (const auto& p : parts) tracked = tracked || p.requires_grad();
  Tensor result = make_result(std::move(out_shape), std::move(out), tracked);
  if (tracked) {
    std::vector<Tape::ImplPtr> inputs;
    for (const auto& p : parts) inputs.push_back(p.impl());
    Tape::active()->record(inputs, result.impl(),
                           [inputs, offsets, s, total](const TensorImpl& o) {
                             for (std::size_t i = 0; i < inputs.size(); ++i) {
                               auto& in = *inputs[i];
                               if (!in.requires_grad) continue;
                               in.ensure_grad();
                               const std::size_t len = in.data.size() / (s.outer * s.inner);
                               for (std::size_t a = 0; a < s.outer; ++a)
                                 for (std::size_t j = 0; j < len * s.inner; ++j)
                                   in.grad[a * len * s.inner + j] +=
                                       o.grad[(a * total + offsets[i]) * s.inner + j];
                             }
                           });
  }
  return result;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  require(axis < x.rank(), "slice: axis out of range for " + shape_str(x.shape()));
  require(length > 0 && start + length <= x.dim(axis),
          "slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
              ") out of bounds for " + shape_str(x.shape()));
  const AxisSplit s = split_at(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<double> out(shape_numel(out_shape));
  auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(xv.begin() + (o * s.len + start) * s.inner, length * s.inner,
                out.begin() + o * length * s.inner);
  const bool tracked = wants_grad({&x});
  Tensor result = make_result(std::move(out_shape), std::move(out), tracked);
  if (tracked) {
    Tape::active()->record({x.impl()}, result.impl(),
                           [X = x.impl(), s, start, length](const TensorImpl& o) {
                             X->ensure_grad();
                             for (std::size_t a = 0; a < s.outer; ++a)
                               for (std::size_t j = 0; j < length * s.inner; ++j)
                                 X->grad[(a * s.len + start) * s.inner + j] +=
                                     o.grad[a * length * s.inner + j];
                           });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const bool tracked = wants_grad({&x});
  Tensor result = make_result({1}, {total}, tracked);
  if (tracked) {
    Tape::active()->record({x.impl()}, result.impl(), [X = x.impl()](const TensorImpl& o) {
      X->ensure_grad();
      for (auto& g : X->grad) g += o.grad[0];
    });
  }
  return result;
}

Tensor mean_rows(const Tensor& x) {
  require(x.rank() == 2, "mean_rows: expected [n x d], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(d, 0.0);
  auto xv = x.data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < d; ++j) out[j] += xv[r * d + j];
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& v : out) v *= inv;
  const bool tracked = wants_grad({&x});
  Tensor result = make_result({d}, std::move(out), tracked);
  if (tracked) {
    Tape::active()->record({x.impl()}, result.impl(), [X = x.impl(), n, d, inv](const TensorImpl& o) {
      X->ensure_grad();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < d; ++j) X->grad[r * d + j] += o.grad[j] * inv;
    });
  }
  return result;
}

namespace {

struct WindowGeometry {
  std::size_t channels, height, width, kernel, stride, pad, out_h, out_w;
};

WindowGeometry window_geometry(std::size_t c, std::size_t h, std::size_t w, std::size_t k,
                               std::size_t stride, std::size_t pad) {
  require(k > 0 && stride > 0, "unfold/fold: kernel and stride must be positive");
  require(h + 2 * pad >= k && w + 2 * pad >= k,
          "unfold/fold: kernel " + std::to_string(k) + " larger than padded map " +
              std::to_string(h + 2 * pad) + "x" + std::to_string(w + 2 * pad));
  return {c, h, w, k, stride, pad, (h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1};
}

// Visits (column-matrix index, map index) for every in-bounds window element.
template <class F>
void for_each_window_element(const WindowGeometry& g, F&& visit) {
  const std::size_t cols = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < g.kernel; ++ki)
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const std::size_t row = (c * g.kernel + ki) * g.kernel + kj;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oh * g.stride + ki) -
                                   static_cast<std::ptrdiff_t>(g.pad);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ow * g.stride + kj) -
                                     static_cast<std::ptrdiff_t>(g.pad);
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(g.width)) continue;
            visit(row * cols + oh * g.out_w + ow,
                  (c * g.height + static_cast<std::size_t>(y)) * g.width +
                      static_cast<std::size_t>(x));
          }
        }
      }
}

}  // namespace

Tensor unfold(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad) {
  require(x.rank() == 3, "unfold: expected [C x H x W], got " + shape_str(x.shape()));
  const auto g = window_geometry(x.dim(0), x.dim(1), x.dim(2), kernel, stride, pad);
  std::vector<double> out(g.channels * kernel * kernel * g.out_h * g.out_w, 0.0);
  auto xv = x.data();
  for_each_window_element(g, [&](std::size_t col, std::size_t src) { out[col] = xv[src]; });
  const bool tracked = wants_grad({&x});
  Tensor result =
      make_result({g.channels * kernel * kernel, g.out_h * g.out_w}, std::move(out), tracked);
  if (tracked) {
    Tape::active()->record({x.impl()}, result.impl(), [X = x.impl(), g](const TensorImpl& o) {
      X->ensure_grad();
      for_each_window_element(g, [&](std::size_t col, std::size_t src) {
        X->grad[src] += o.grad[col];
      });
    });
  }
  return result;
}

Tensor fold(const Tensor& cols, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t kernel, std::size_t stride, std::size_t pad) {
  const auto g = window_geometry(channels, height, width, kernel, stride, pad);
  require(cols.rank() == 2 && cols.dim(0) == channels * kernel * kernel &&
              cols.dim(1) == g.out_h * g.out_w,
          "fold: columns " + shape_str(cols.shape()) + " do not match target geometry");
  std::vector<double> out(channels * height * width, 0.0);
  auto cv = cols.data();
  for_each_window_element(g, [&](std::size_t col, std::size_t dst) { out[dst] += cv[col]; });
  const bool tracked = wants_grad({&cols});
  Tensor result = make_result({channels, height, width}, std::move(out), tracked);
  if (tracked) {
    Tape::active()->record({cols.impl()}, result.impl(), [C = cols.impl(), g](const TensorImpl& o) {
      C->ensure_grad();
      for_each_window_element(g, [&](std::size_t col, std::size_t dst) {
        C->grad[col] += o.grad[dst];
      });
    });
  }
  return result;
}

Tensor apply_mask(const Tensor& x, const std::vector<double>& mask, double keep_scale) {
  require(mask.size() == x.numel(), "apply_mask: mask size does not match " +
                                        shape_str(x.shape()));
  std::vector<double> out(x.numel());
  auto xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i] * keep_scale;
  const bool tracked = wants_grad({&x});
  Tensor result = make_result(x.shape(), std::move(out), tracked);
  if (tracked) {
    Tape::active()->record({x.impl()}, result.impl(),
                           [X = x.impl(), mask, keep_scale](const TensorImpl& o) {
                             X->ensure_grad();
                             for (std::size_t i = 0; i < mask.size(); ++i)
                               X->grad[i] += o.grad[i] * mask[i] * keep_scale;
                           });
  }
  return result;
}

}  // namespace mivolo
