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

#include "bidir/numeric/tensor.h"

namespace bidir::nn {

// Inverse-square-root schedule with linear warmup:
//   d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)
// Throws UsageError for step == 0.
double lr_schedule(std::uint64_t step, std::uint64_t d_model, std::uint64_t warmup);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
};

// One moment slot per parameter, shape-congruent with it.
struct OptimState {
  std::uint64_t step = 0;
  AdamOptions options;
  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;

  static OptimState for_parameters(std::span<const Tensor<float>> params, AdamOptions options = {});
};

// Bias-corrected Adam update using each parameter's accumulated gradient
// (a parameter without a gradient slot is treated as having zero gradient).
void adam_step(std::span<Tensor<float>> params, OptimState& state, double lr);

// Scales all gradients so their global L2 norm is at most max_norm and
// returns the norm measured before scaling.
double clip_grad_norm(std::span<Tensor<float>> params, double max_norm);

}  // namespace bidir::nn
