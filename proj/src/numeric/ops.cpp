// Copyright 2026 The bidirnmt Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "bidir/numeric/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace bidir::nn {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;

template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

[[noreturn]] void shape_error(std::string_view op, const std::string& what) {
  throw ConfigError(std::string(op) + ": " + what);
}

template <typename T>
void check_finite(std::string_view op, const Buffer<T>& values) {
  // x * 0 is NaN exactly when x is NaN or infinite.
  T probe = T(0);
  for (T v : values) probe += v * T(0);
  if (std::isnan(probe)) throw NumericError("non-finite value produced by " + std::string(op));
}

// Wraps a computed value as a tensor and records the backward closure when
// any input takes part in differentiation.
template <typename T>
Tensor<T> record(std::string_view op, Shape shape, Buffer<T> value,
                 std::initializer_list<NodePtr<T>> inputs,
                 std::function<void(detail::Node<T>&)> backward, bool check = true) {
  if (check) check_finite(op, value);
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (grad_enabled()) {
    for (const auto& in : inputs) {
      if (in->requires_grad) {
        node->requires_grad = true;
        break;
      }
    }
  }
  if (node->requires_grad) {
    node->parents.assign(inputs.begin(), inputs.end());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

std::size_t last_dim(const Shape& s, std::string_view op) {
  if (s.empty()) shape_error(op, "tensor has no axes");
  return s.back();
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& x, const Tensor<T>& w, bool transpose_w) {
  constexpr std::string_view op = "matmul";
  if (w.rank() != 2) shape_error(op, "weight must be rank 2, got " + shape_to_string(w.shape()));
  const std::size_t k = last_dim(x.shape(), op);
  const std::size_t wk = transpose_w ? w.dim(1) : w.dim(0);
  if (k != wk) {
    shape_error(op, "inner dimensions differ: " + shape_to_string(x.shape()) + " x " +
                        shape_to_string(w.shape()) + (transpose_w ? "^T" : ""));
  }
  const std::size_t n = transpose_w ? w.dim(0) : w.dim(1);
  const std::size_t m = x.numel() / k;
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Buffer<T> out(m * n);
  ConstMatMap<T> xm(x.data().data(), m, k);
  if (transpose_w) {
    MatMap<T>(out.data(), m, n).noalias() = xm * ConstMatMap<T>(w.data().data(), n, k).transpose();
  } else {
    MatMap<T>(out.data(), m, n).noalias() = xm * ConstMatMap<T>(w.data().data(), k, n);
  }
  auto xn = x.node();
  auto wn = w.node();
  return record<T>(op, std::move(out_shape), std::move(out), {xn, wn},
                   [xn, wn, m, k, n, transpose_w](detail::Node<T>& self) {
                     ConstMatMap<T> dc(self.grad.data(), m, n);
                     if (xn->requires_grad) {
                       xn->ensure_grad();
                       MatMap<T> dx(xn->grad.data(), m, k);
                       if (transpose_w) {
                         dx.noalias() += dc * ConstMatMap<T>(wn->value.data(), n, k);
                       } else {
                         dx.noalias() += dc * ConstMatMap<T>(wn->value.data(), k, n).transpose();
                       }
                     }
                     if (wn->requires_grad) {
                       wn->ensure_grad();
                       ConstMatMap<T> xm(xn->value.data(), m, k);
                       if (transpose_w) {
                         MatMap<T>(wn->grad.data(), n, k).noalias() += dc.transpose() * xm;
                       } else {
                         MatMap<T>(wn->grad.data(), k, n).noalias() += xm.transpose() * dc;
                       }
                     }
                   });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  constexpr std::string_view op = "linear";
  if (w.rank() != 2) shape_error(op, "weight must be rank 2, got " + shape_to_string(w.shape()));
  const std::size_t k = last_dim(x.shape(), op);
  if (k != w.dim(0)) {
    shape_error(op, "inner dimensions differ: " + shape_to_string(x.shape()) + " x " +
                        shape_to_string(w.shape()));
  }
  const std::size_t n = w.dim(1);
  if (b.rank() != 1 || b.dim(0) != n) shape_error(op, "bias must have shape [" + std::to_string(n) + "]");
  const std::size_t m = x.numel() / k;
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Buffer<T> out(m * n);
  MatMap<T> c(out.data(), m, n);
  c.noalias() = ConstMatMap<T>(x.data().data(), m, k) * ConstMatMap<T>(w.data().data(), k, n);
  c.rowwise() += ConstVecMap<T>(b.data().data(), n).transpose();
  auto xn = x.node();
  auto wn = w.node();
  auto bn = b.node();
  return record<T>(op, std::move(out_shape), std::move(out), {xn, wn, bn},
                   [xn, wn, bn, m, k, n](detail::Node<T>& self) {
                     ConstMatMap<T> dc(self.grad.data(), m, n);
                     if (xn->requires_grad) {
                       xn->ensure_grad();
                       MatMap<T>(xn->grad.data(), m, k).noalias() +=
                           dc * ConstMatMap<T>(wn->value.data(), k, n).transpose();
                     }
                     if (wn->requires_grad) {
                       wn->ensure_grad();
                       MatMap<T>(wn->grad.data(), k, n).noalias() +=
                           ConstMatMap<T>(xn->value.data(), m, k).transpose() * dc;
                     }
                     if (bn->requires_grad) {
                       bn->ensure_grad();
                       VecMap<T>(bn->grad.data(), n) += dc.colwise().sum().transpose();
                     }
                   });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  constexpr std::string_view op = "bmm";
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
    shape_error(op, "expected rank-3 operands with equal batch, got " + shape_to_string(a.shape()) +
                        " and " + shape_to_string(b.shape()));
  }
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
  const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
  if (bk != k) {
    shape_error(op, "inner dimensions differ: " + shape_to_string(a.shape()) + " x " +
                        shape_to_string(b.shape()) + (transpose_b ? "^T" : ""));
  }
  Buffer<T> out(batch * m * n);
  const T* ap = a.data().data();
  const T* bp = b.data().data();
  for (std::size_t i = 0; i < batch; ++i) {
    ConstMatMap<T> am(ap + i * m * k, m, k);
    MatMap<T> cm(out.data() + i * m * n, m, n);
    if (transpose_b) {
      cm.noalias() = am * ConstMatMap<T>(bp + i * n * k, n, k).transpose();
    } else {
      cm.noalias() = am * ConstMatMap<T>(bp + i * k * n, k, n);
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return record<T>(
      op, {batch, m, n}, std::move(out), {an, bn},
      [an, bn, batch, m, k, n, transpose_b](detail::Node<T>& self) {
        if (an->requires_grad) an->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (std::size_t i = 0; i < batch; ++i) {
          ConstMatMap<T> dc(self.grad.data() + i * m * n, m, n);
          ConstMatMap<T> am(an->value.data() + i * m * k, m, k);
          if (transpose_b) {
            ConstMatMap<T> bm(bn->value.data() + i * n * k, n, k);
            if (an->requires_grad) MatMap<T>(an->grad.data() + i * m * k, m, k).noalias() += dc * bm;
            if (bn->requires_grad) {
              MatMap<T>(bn->grad.data() + i * n * k, n, k).noalias() += dc.transpose() * am;
            }
          } else {
            ConstMatMap<T> bm(bn->value.data() + i * k * n, k, n);
            if (an->requires_grad) {
              MatMap<T>(an->grad.data() + i * m * k, m, k).noalias() += dc * bm.transpose();
            }
            if (bn->requires_grad) {
              MatMap<T>(bn->grad.data() + i * k * n, k, n).noalias() += am.transpose() * dc;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  constexpr std::string_view op = "add";
  if (a.shape() != b.shape()) {
    shape_error(op, "shapes differ: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  Buffer<T> out(a.numel());
  const T* ap = a.data().data();
  const T* bp = b.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ap[i] + bp[i];
  auto an = a.node();
  auto bn = b.node();
  return record<T>(op, a.shape(), std::move(out), {an, bn}, [an, bn](detail::Node<T>& self) {
    for (auto* in : {an.get(), bn.get()}) {
      if (!in->requires_grad) continue;
      in->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
  constexpr std::string_view op = "add_bias";
  const std::size_t n = last_dim(x.shape(), op);
  if (b.rank() != 1 || b.dim(0) != n) shape_error(op, "bias must have shape [" + std::to_string(n) + "]");
  Buffer<T> out(x.data().begin(), x.data().end());
  const T* bp = b.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bp[i % n];
  auto xn = x.node();
  auto bn = b.node();
  return record<T>(op, x.shape(), std::move(out), {xn, bn}, [xn, bn, n](detail::Node<T>& self) {
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i % n] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  constexpr std::string_view op = "mul";
  if (a.shape() != b.shape()) {
    shape_error(op, "shapes differ: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  Buffer<T> out(a.numel());
  const T* ap = a.data().data();
  const T* bp = b.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ap[i] * bp[i];
  auto an = a.node();
  auto bn = b.node();
  return record<T>(op, a.shape(), std::move(out), {an, bn}, [an, bn](detail::Node<T>& self) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Buffer<T> out(x.data().begin(), x.data().end());
  for (T& v : out) v *= factor;
  auto xn = x.node();
  return record<T>("scale", x.shape(), std::move(out), {xn}, [xn, factor](detail::Node<T>& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = std::accumulate(x.data().begin(), x.data().end(), T(0));
  auto xn = x.node();
  return record<T>("sum", {1}, {total}, {xn}, [xn](detail::Node<T>& self) {
    xn->ensure_grad();
    for (T& g : xn->grad) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids) {
  constexpr std::string_view op = "embedding";
  if (table.rank() != 2) shape_error(op, "table must be rank 2");
  if (ids.empty()) shape_error(op, "no ids to look up");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  Buffer<T> out(idx.size() * d);
  const T* tp = table.data().data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= vocab) {
      shape_error(op, "id " + std::to_string(idx[i]) + " outside vocabulary of size " + std::to_string(vocab));
    }
    std::copy_n(tp + static_cast<std::size_t>(idx[i]) * d, d, out.data() + i * d);
  }
  auto tn = table.node();
  const std::size_t n = idx.size();
  return record<T>(op, {n, d}, std::move(out), {tn},
                   [tn, idx = std::move(idx), d](detail::Node<T>& self) {
                     tn->ensure_grad();
                     for (std::size_t i = 0; i < idx.size(); ++i) {
                       T* dst = tn->grad.data() + static_cast<std::size_t>(idx[i]) * d;
                       const T* src = self.grad.data() + i * d;
                       for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                     }
                   });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  const std::size_t n = last_dim(x.shape(), "softmax");
  const std::size_t rows = x.numel() / n;
  Buffer<T> out(x.numel());
  const T* xp = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xp + r * n;
    T* o = out.data() + r * n;
    T mx = *std::max_element(in, in + n);
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= z;
  }
  auto xn = x.node();
  return record<T>("softmax", x.shape(), std::move(out), {xn}, [xn, rows, n](detail::Node<T>& self) {
    xn->ensure_grad();
    // self.value is the softmax output y; dx = y * (dy - <dy, y>)
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * n;
      const T* dy = self.grad.data() + r * n;
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
      T* dx = xn->grad.data() + r * n;
      for (std::size_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
    }
  });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  const std::size_t n = last_dim(x.shape(), "log_softmax");
  const std::size_t rows = x.numel() / n;
  Buffer<T> out(x.numel());
  const T* xp = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xp + r * n;
    T* o = out.data() + r * n;
    T mx = *std::max_element(in, in + n);
    T z = 0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(in[j] - mx);
    T lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) o[j] = in[j] - lse;
  }
  auto xn = x.node();
  return record<T>("log_softmax", x.shape(), std::move(out), {xn}, [xn, rows, n](detail::Node<T>& self) {
    xn->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = self.value.data() + r * n;
      const T* dy = self.grad.data() + r * n;
      T total = 0;
      for (std::size_t j = 0; j < n; ++j) total += dy[j];
      T* dx = xn->grad.data() + r * n;
      for (std::size_t j = 0; j < n; ++j) dx[j] += dy[j] - std::exp(y[j]) * total;
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  constexpr std::string_view op = "layer_norm";
  const std::size_t n = last_dim(x.shape(), op);
  if (gamma.shape() != Shape{n} || beta.shape() != Shape{n}) {
    shape_error(op, "gain and bias must have shape [" + std::to_string(n) + "]");
  }
  const std::size_t rows = x.numel() / n;
  Buffer<T> out(x.numel());
  Buffer<T> xhat(x.numel());
  Buffer<T> inv_std(rows);
  const T* xp = x.data().data();
  const T* g = gamma.data().data();
  const T* b = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xp + r * n;
    T mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += in[j];
    mu /= static_cast<T>(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<T>(n);
    T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      T h = (in[j] - mu) * is;
      xhat[r * n + j] = h;
      out[r * n + j] = h * g[j] + b[j];
    }
  }
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return record<T>(
      op, x.shape(), std::move(out), {xn, gn, bn},
      [xn, gn, bn, rows, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node<T>& self) {
        if (gn->requires_grad) gn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        if (xn->requires_grad) xn->ensure_grad();
        Buffer<T> dxhat(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* dy = self.grad.data() + r * n;
          const T* h = xhat.data() + r * n;
          if (gn->requires_grad) {
            for (std::size_t j = 0; j < n; ++j) gn->grad[j] += dy[j] * h[j];
          }
          if (bn->requires_grad) {
            for (std::size_t j = 0; j < n; ++j) bn->grad[j] += dy[j];
          }
          if (!xn->requires_grad) continue;
          T s1 = 0, s2 = 0;
          for (std::size_t j = 0; j < n; ++j) {
            dxhat[j] = dy[j] * gn->value[j];
            s1 += dxhat[j];
            s2 += dxhat[j] * h[j];
          }
          T* dx = xn->grad.data() + r * n;
          const T scale_r = inv_std[r] / static_cast<T>(n);
          for (std::size_t j = 0; j < n; ++j) {
            dx[j] += scale_r * (static_cast<T>(n) * dxhat[j] - s1 - h[j] * s2);
          }
        }
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Buffer<T> out(x.data().begin(), x.data().end());
  for (T& v : out) v = v > T(0) ? v : T(0);
  auto xn = x.node();
  return record<T>("relu", x.shape(), std::move(out), {xn}, [xn](detail::Node<T>& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (xn->value[i] > T(0)) xn->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, Rng& rng) {
  if (!train || p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout: rate must be below 1");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  Buffer<T> mask(x.numel());
  Buffer<T> out(x.numel());
  const T* xp = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() < p ? T(0) : keep_scale;
    out[i] = xp[i] * mask[i];
  }
  auto xn = x.node();
  return record<T>("dropout", x.shape(), std::move(out), {xn}, [xn, mask = std::move(mask)](detail::Node<T>& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * mask[i];
  });
}

template <typename T>
Tensor<T> masked_fill(const Tensor<T>& x, std::span<const std::uint8_t> mask, T value) {
  if (mask.size() != x.numel()) {
    shape_error("masked_fill", "mask has " + std::to_string(mask.size()) + " entries for shape " +
                                   shape_to_string(x.shape()));
  }
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  Buffer<T> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (m[i]) out[i] = value;
  }
  auto xn = x.node();
  return record<T>("masked_fill", x.shape(), std::move(out), {xn}, [xn, m = std::move(m)](detail::Node<T>& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (!m[i]) xn->grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  constexpr std::string_view op = "concat";
  if (parts.empty()) shape_error(op, "nothing to concatenate");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) shape_error(op, "axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) shape_error(op, "rank mismatch");
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != axis && p.dim(i) != first[i]) {
        shape_error(op, "shapes " + shape_to_string(first) + " and " + shape_to_string(p.shape()) +
                            " differ off the concatenation axis");
      }
    }
    out_shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  const std::size_t out_row = out_shape[axis] * inner;
  Buffer<T> out(shape_numel(out_shape));
  std::vector<NodePtr<T>> nodes;
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(axis) * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(p.data().data() + o * w, w, out.data() + o * out_row + offset);
    }
    nodes.push_back(p.node());
    widths.push_back(w);
    offset += w;
  }
  check_finite(op, out);
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(out_shape);
  node->value = std::move(out);
  node->op = op;
  bool needs = false;
  for (const auto& n : nodes) needs = needs || n->requires_grad;
  if (grad_enabled() && needs) {
    node->requires_grad = true;
    node->parents = nodes;
    node->backward = [nodes, widths, outer, out_row](detail::Node<T>& self) {
      std::size_t off = 0;
      for (std::size_t p = 0; p < nodes.size(); ++p) {
        const std::size_t w = widths[p];
        if (nodes[p]->requires_grad) {
          nodes[p]->ensure_grad();
          for (std::size_t o = 0; o < outer; ++o) {
            const T* src = self.grad.data() + o * out_row + off;
            T* dst = nodes[p]->grad.data() + o * w;
            for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
          }
        }
        off += w;
      }
    };
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, std::span<const std::size_t> perm) {
  constexpr std::string_view op = "transpose";
  const std::size_t rank = x.rank();
  if (perm.size() != rank) shape_error(op, "permutation length differs from rank");
  std::vector<bool> used(rank, false);
  for (auto p : perm) {
    if (p >= rank || used[p]) shape_error(op, "invalid permutation");
    used[p] = true;
  }
  const Shape& in_shape = x.shape();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(rank);
  std::vector<std::size_t> src_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[perm[i]];
    src_strides[i] = in_strides[perm[i]];
  }
  // gather[i] is the input offset of output element i
  std::vector<std::size_t> gather(x.numel());
  std::vector<std::size_t> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < gather.size(); ++i) {
    gather[i] = src;
    for (std::size_t a = rank; a-- > 0;) {
      if (++counter[a] < out_shape[a]) {
        src += src_strides[a];
        break;
      }
      src -= src_strides[a] * (out_shape[a] - 1);
      counter[a] = 0;
    }
  }
  Buffer<T> out(x.numel());
  const T* xp = x.data().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xp[gather[i]];
  auto xn = x.node();
  return record<T>(
      op, std::move(out_shape), std::move(out), {xn},
      [xn, gather = std::move(gather)](detail::Node<T>& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < gather.size(); ++i) xn->grad[gather[i]] += self.grad[i];
      },
      false);
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    shape_error("reshape", "cannot view " + shape_to_string(x.shape()) + " as " + shape_to_string(shape));
  }
  Buffer<T> out(x.data().begin(), x.data().end());
  auto xn = x.node();
  return record<T>(
      "reshape", std::move(shape), std::move(out), {xn},
      [xn](detail::Node<T>& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
      },
      false);
}

template <typename T>
Tensor<T> index_select(const Tensor<T>& x, std::span<const std::int32_t> rows) {
  constexpr std::string_view op = "index_select";
  if (x.rank() < 1 || rows.empty()) shape_error(op, "need a tensor with a leading axis and at least one row");
  const std::size_t count = x.dim(0);
  const std::size_t width = x.numel() / count;
  std::vector<std::int32_t> idx(rows.begin(), rows.end());
  Buffer<T> out(idx.size() * width);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= count) shape_error(op, "row index out of range");
    std::copy_n(x.data().data() + static_cast<std::size_t>(idx[i]) * width, width, out.data() + i * width);
  }
  Shape out_shape = x.shape();
  out_shape[0] = idx.size();
  auto xn = x.node();
  return record<T>(
      op, std::move(out_shape), std::move(out), {xn},
      [xn, idx = std::move(idx), width](detail::Node<T>& self) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i) {
          T* dst = xn->grad.data() + static_cast<std::size_t>(idx[i]) * width;
          const T* src = self.grad.data() + i * width;
          for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
        }
      },
      false);
}

template <typename T>
Tensor<T> smoothed_cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                                 std::int32_t ignore_index, double smoothing) {
  constexpr std::string_view op = "smoothed_cross_entropy";
  if (logits.rank() != 2 || logits.dim(0) != targets.size()) {
    shape_error(op, "logits " + shape_to_string(logits.shape()) + " do not match " +
                        std::to_string(targets.size()) + " targets");
  }
  if (smoothing < 0.0 || smoothing >= 1.0) throw ConfigError("label smoothing must lie in [0, 1)");
  const std::size_t rows = logits.dim(0), v = logits.dim(1);
  const T on = static_cast<T>(1.0 - smoothing);
  const T spread = static_cast<T>(smoothing / static_cast<double>(v));
  std::vector<std::int32_t> tgt(targets.begin(), targets.end());
  Buffer<T> logp(logits.numel());
  Buffer<T> out(rows, T(0));
  const T* lp = logits.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    if (tgt[r] == ignore_index) continue;
    if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= v) shape_error(op, "target id outside vocabulary");
    const T* in = lp + r * v;
    T* o = logp.data() + r * v;
    T mx = *std::max_element(in, in + v);
    T z = 0;
    for (std::size_t j = 0; j < v; ++j) z += std::exp(in[j] - mx);
    T lse = mx + std::log(z);
    T total = 0;
    for (std::size_t j = 0; j < v; ++j) {
      o[j] = in[j] - lse;
      total += o[j];
    }
    out[r] = -on * o[tgt[r]] - spread * total;
  }
  auto ln = logits.node();
  return record<T>(op, {rows}, std::move(out), {ln},
                   [ln, tgt = std::move(tgt), logp = std::move(logp), rows, v, on, spread,
                    ignore_index](detail::Node<T>& self) {
                     ln->ensure_grad();
                     for (std::size_t r = 0; r < rows; ++r) {
                       if (tgt[r] == ignore_index) continue;
                       const T g = self.grad[r];
                       const T* o = logp.data() + r * v;
                       T* dx = ln->grad.data() + r * v;
                       // d/dlogits of -sum_j q_j log p_j is p - q, with sum_j q_j = 1
                       for (std::size_t j = 0; j < v; ++j) dx[j] += g * (std::exp(o[j]) - spread);
                       dx[tgt[r]] -= g * on;
                     }
                   });
}

#define BIDIR_INSTANTIATE_OPS(T)                                                                        \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool);                                  \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&, bool);                                     \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> scale(const Tensor<T>&, T);                                                        \
  template Tensor<T> sum(const Tensor<T>&);                                                             \
  template Tensor<T> mean(const Tensor<T>&);                                                            \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const std::int32_t>);                        \
  template Tensor<T> softmax(const Tensor<T>&);                                                         \
  template Tensor<T> log_softmax(const Tensor<T>&);                                                     \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);               \
  template Tensor<T> relu(const Tensor<T>&);                                                            \
  template Tensor<T> dropout(const Tensor<T>&, double, bool, Rng&);                                     \
  template Tensor<T> masked_fill(const Tensor<T>&, std::span<const std::uint8_t>, T);                   \
  template Tensor<T> concat(std::span<const Tensor<T>>, std::size_t);                                   \
  template Tensor<T> transpose(const Tensor<T>&, std::span<const std::size_t>);                         \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                  \
  template Tensor<T> index_select(const Tensor<T>&, std::span<const std::int32_t>);                     \
  template Tensor<T> smoothed_cross_entropy(const Tensor<T>&, std::span<const std::int32_t>,            \
                                            std::int32_t, double);

BIDIR_INSTANTIATE_OPS(float)
BIDIR_INSTANTIATE_OPS(double)

#undef BIDIR_INSTANTIATE_OPS

}  // namespace bidir::nn
