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

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bidir/numeric/random.h"
#include "bidir/numeric/tensor.h"

namespace bidir::nn {

// Differentiable operations. Every op validates its shapes (ConfigError on a
// mismatch) and rejects non-finite results (NumericError naming the op).

// x[..., k] @ w[k, n] -> [..., n]; with transpose_w, w is [n, k] and the
// product is x @ w^T.
template <typename T>
Tensor<T> matmul(const Tensor<T>& x, const Tensor<T>& w, bool transpose_w = false);

// x[..., k] @ w[k, n] + b[n]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// Batched a[b, m, k] @ b[b, k, n], or a @ b^T with b[b, n, k] when transpose_b.
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

// x[..., n] + b[n]
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

// Row lookup: table[v, d], ids -> [ids.size(), d].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids);

// Last-axis softmax / log-softmax. Both subtract the row max first.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x);

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x);

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Inverted dropout. Identity when !train or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, Rng& rng);

// Positions where mask != 0 are replaced by value; mask has x.numel() entries.
template <typename T>
Tensor<T> masked_fill(const Tensor<T>& x, std::span<const std::uint8_t> mask, T value);

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);

// General axis permutation: out.shape[i] = x.shape[perm[i]].
template <typename T>
Tensor<T> transpose(const Tensor<T>& x, std::span<const std::size_t> perm);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

// Gathers leading-axis slices: x[u, ...], rows -> [rows.size(), ...].
template <typename T>
Tensor<T> index_select(const Tensor<T>& x, std::span<const std::int32_t> rows);

// Per-row label-smoothed cross entropy over logits[n, v]. The smoothed target
// puts (1 - smoothing) on the gold id and smoothing / v on every id. Rows
// whose target equals ignore_index contribute 0 and receive no gradient.
template <typename T>
Tensor<T> smoothed_cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets,
                                 std::int32_t ignore_index, double smoothing);

}  // namespace bidir::nn
