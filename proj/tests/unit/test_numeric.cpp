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

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "bidir/errors.h"
#include "bidir/numeric/ops.h"
#include "bidir/numeric/optim.h"
#include "support/gradcheck.h"

using namespace bidir;
using nn::Tensor;
using TD = Tensor<double>;
using TF = Tensor<float>;

namespace {

TD random_tensor(nn::Shape shape, nn::Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::vector<double> v(nn::shape_numel(shape));
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return TD::from_data(std::move(shape), std::move(v), grad);
}

void check_grad(std::vector<TD> leaves, const std::function<TD()>& f, std::uint64_t seed = 7) {
  nn::Rng rng(seed);
  auto r = testing::grad_check(std::move(leaves), f, rng);
  INFO("worst relative error " << r.worst);
  CHECK(r.checked > 0);
  CHECK(r.pass_rate() >= 0.95);
}

}  // namespace

TEST_CASE("tensor construction and shape contract") {
  auto t = TF::zeros({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK_THROWS_AS(TF::from_data({2, 2}, {1, 2, 3}), ConfigError);
  CHECK_THROWS_AS(TF::zeros({0, 3}), ConfigError);
}

TEST_CASE("softmax of equal logits is uniform") {
  auto p = nn::softmax(TF::from_data({3}, {0, 0, 0}));
  for (float v : p.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-7));
}

TEST_CASE("log_softmax agrees with log of softmax and is shift invariant") {
  nn::Rng rng(3);
  auto x = random_tensor({4, 9}, rng, -5, 5, false);
  auto ls = testing::values(nn::log_softmax(x));
  auto sm = testing::values(nn::softmax(x));
  for (std::size_t i = 0; i < ls.size(); ++i) CHECK(std::abs(ls[i] - std::log(sm[i])) < 1e-6);
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (std::size_t j = 0; j < 9; ++j) {
      CHECK(sm[r * 9 + j] >= 0.0);
      total += sm[r * 9 + j];
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
  auto shifted = testing::values(nn::log_softmax(nn::add(x, TD::full({4, 9}, 17.5))));
  for (std::size_t i = 0; i < ls.size(); ++i) CHECK(std::abs(shifted[i] - ls[i]) < 1e-5);
}

TEST_CASE("matmul matches a triple loop") {
  nn::Rng rng(11);
  auto a = random_tensor({2, 3}, rng, -1, 1, false);
  auto b = random_tensor({3, 4}, rng, -1, 1, false);
  auto c = testing::values(nn::matmul(a, b));
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 3; ++k) s += a.data()[i * 3 + k] * b.data()[k * 4 + j];
      CHECK(std::abs(c[i * 4 + j] - s) < 1e-6);
    }
  }
  CHECK_THROWS_AS(nn::matmul(a, a), ConfigError);
}

TEST_CASE("non-finite outputs raise a numeric error naming the op") {
  auto x = TF::from_data({2}, {3e38f, 3e38f});
  try {
    nn::add(x, x);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("add") != std::string::npos);
  }
}

TEST_CASE("backward of sum of squares") {
  auto w = TF::from_data({3}, {1, 2, 3}, true);
  nn::sum(nn::mul(w, w)).backward();
  auto g = w.grad();
  CHECK(g[0] == 2.0f);
  CHECK(g[1] == 4.0f);
  CHECK(g[2] == 6.0f);
}

TEST_CASE("backward requires a scalar; detached tensors get no gradient") {
  auto w = TF::from_data({2}, {1, 2}, true);
  auto c = TF::from_data({2}, {3, 4}, false);
  CHECK_THROWS_AS(nn::mul(w, c).backward(), UsageError);
  nn::sum(nn::mul(w, c)).backward();
  CHECK(w.has_grad());
  CHECK_FALSE(c.has_grad());
}

TEST_CASE("dropout is the identity outside training") {
  nn::Rng rng(1);
  auto x = random_tensor({5, 5}, rng, -1, 1, false);
  auto y = nn::dropout(x, 0.5, false, rng);
  CHECK(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
}

TEST_CASE("gradient check: every differentiable op") {
  nn::Rng rng(2024);
  auto x = random_tensor({3, 4}, rng);
  auto w = random_tensor({4, 5}, rng);
  auto wt = random_tensor({5, 4}, rng);
  auto b = random_tensor({5}, rng);
  auto y = random_tensor({3, 4}, rng);

  SUBCASE("matmul") { check_grad({x, w}, [&] { return testing::weighted_sum(nn::matmul(x, w), 1); }); }
  SUBCASE("matmul transposed") {
    check_grad({x, wt}, [&] { return testing::weighted_sum(nn::matmul(x, wt, true), 2); });
  }
  SUBCASE("linear") { check_grad({x, w, b}, [&] { return testing::weighted_sum(nn::linear(x, w, b), 3); }); }
  SUBCASE("bmm") {
    auto a3 = random_tensor({2, 3, 4}, rng);
    auto b3 = random_tensor({2, 4, 3}, rng);
    auto c3 = random_tensor({2, 5, 4}, rng);
    check_grad({a3, b3}, [&] { return testing::weighted_sum(nn::bmm(a3, b3), 4); });
    check_grad({a3, c3}, [&] { return testing::weighted_sum(nn::bmm(a3, c3, true), 5); });
  }
  SUBCASE("add, mul, scale, mean") {
    check_grad({x, y}, [&] { return testing::weighted_sum(nn::add(x, y), 6); });
    check_grad({x, y}, [&] { return testing::weighted_sum(nn::mul(x, y), 7); });
    check_grad({x}, [&] { return nn::mean(nn::scale(nn::mul(x, x), 0.7)); });
  }
  SUBCASE("add_bias") {
    auto bb = random_tensor({4}, rng);
    check_grad({x, bb}, [&] { return testing::weighted_sum(nn::add_bias(x, bb), 8); });
  }
  SUBCASE("embedding") {
    auto table = random_tensor({6, 3}, rng);
    std::vector<std::int32_t> ids{0, 3, 3, 5};
    check_grad({table}, [&] { return testing::weighted_sum(nn::embedding(table, ids), 9); });
  }
  SUBCASE("softmax and log_softmax") {
    auto z = random_tensor({3, 5}, rng, -3, 3);
    check_grad({z}, [&] { return testing::weighted_sum(nn::softmax(z), 10); });
    check_grad({z}, [&] { return testing::weighted_sum(nn::log_softmax(z), 11); });
  }
  SUBCASE("layer_norm") {
    auto gamma = random_tensor({4}, rng, 0.5, 1.5);
    auto beta = random_tensor({4}, rng);
    check_grad({x, gamma, beta}, [&] { return testing::weighted_sum(nn::layer_norm(x, gamma, beta), 12); });
  }
  SUBCASE("relu away from the kink") {
    std::vector<double> v(12);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i % 2 ? 1.0 : -1.0) * (0.1 + 0.05 * static_cast<double>(i));
    auto z = TD::from_data({3, 4}, v, true);
    check_grad({z}, [&] { return testing::weighted_sum(nn::relu(z), 13); });
  }
  SUBCASE("dropout in training mode with a fixed mask") {
    check_grad({x}, [&] {
      nn::Rng mask_rng(99);
      return testing::weighted_sum(nn::dropout(x, 0.3, true, mask_rng), 14);
    });
  }
  SUBCASE("masked_fill") {
    std::vector<std::uint8_t> mask{1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 0, 0};
    check_grad({x}, [&] { return testing::weighted_sum(nn::softmax(nn::masked_fill(x, mask, -1e9)), 15); });
  }
  SUBCASE("concat") {
    std::vector<TD> parts{x, y};
    check_grad({x, y}, [&] { return testing::weighted_sum(nn::concat<double>(parts, 0), 16); });
    check_grad({x, y}, [&] { return testing::weighted_sum(nn::concat<double>(parts, 1), 17); });
  }
  SUBCASE("transpose and reshape") {
    auto t3 = random_tensor({2, 3, 4}, rng);
    std::vector<std::size_t> perm{2, 0, 1};
    check_grad({t3}, [&] { return testing::weighted_sum(nn::transpose(t3, perm), 18); });
    check_grad({t3}, [&] { return testing::weighted_sum(nn::reshape(t3, {6, 4}), 19); });
  }
  SUBCASE("index_select") {
    std::vector<std::int32_t> rows{2, 0, 2, 1};
    check_grad({x}, [&] { return testing::weighted_sum(nn::index_select(x, rows), 20); });
  }
  SUBCASE("smoothed cross entropy with padding") {
    auto logits = random_tensor({4, 6}, rng, -2, 2);
    std::vector<std::int32_t> targets{1, 0, 5, 3};
    check_grad({logits}, [&] { return nn::sum(nn::smoothed_cross_entropy(logits, targets, 0, 0.1)); });
    check_grad({logits}, [&] { return nn::sum(nn::smoothed_cross_entropy(logits, targets, -1, 0.0)); });
  }
}

TEST_CASE("smoothed cross entropy matches its definition") {
  auto logits = TD::from_data({2, 3}, {0.5, -1.0, 2.0, 0.0, 0.0, 0.0});
  std::vector<std::int32_t> targets{2, 0};
  const double eps = 0.1;
  auto loss = testing::values(nn::smoothed_cross_entropy(logits, targets, -1, eps));
  auto lp = testing::values(nn::log_softmax(logits));
  for (std::size_t r = 0; r < 2; ++r) {
    double expect = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double q = (j == static_cast<std::size_t>(targets[r]) ? 1.0 - eps : 0.0) + eps / 3.0;
      expect -= q * lp[r * 3 + j];
    }
    CHECK(std::abs(loss[r] - expect) < 1e-12);
  }
  auto ignored = testing::values(nn::smoothed_cross_entropy(logits, std::vector<std::int32_t>{2, 0}, 0, eps));
  CHECK(ignored[1] == 0.0);
}

TEST_CASE("learning-rate schedule") {
  const double d = 256, w = 4000;
  CHECK(nn::lr_schedule(4000, 256, 4000) == doctest::Approx(std::pow(d, -0.5) * std::pow(w, -0.5)));
  CHECK(nn::lr_schedule(1, 256, 4000) == doctest::Approx(std::pow(d, -0.5) * std::pow(w, -1.5)));
  CHECK_THROWS_AS(nn::lr_schedule(0, 256, 4000), UsageError);
  for (std::uint64_t s = 1; s < 4000; ++s) CHECK(nn::lr_schedule(s + 1, 256, 4000) >= nn::lr_schedule(s, 256, 4000));
  CHECK(nn::lr_schedule(8000, 256, 4000) < nn::lr_schedule(4000, 256, 4000));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  std::vector<TF> params{TF::from_data({3}, {1, -2, 3}, true)};
  params[0].zero_grad();
  auto state = nn::OptimState::for_parameters(params);
  nn::adam_step(params, state, 0.1);
  CHECK(params[0].data()[0] == 1.0f);
  CHECK(params[0].data()[1] == -2.0f);
  CHECK(state.step == 1);
}

TEST_CASE("adam: one scalar step matches the recurrence by hand") {
  std::vector<TF> params{TF::from_data({1}, {0.5f}, true)};
  params[0].mutable_grad()[0] = 1.0f;
  auto state = nn::OptimState::for_parameters(params);
  nn::adam_step(params, state, 0.1);
  // m = 0.1, v = 0.02; m_hat = 1, v_hat = 1; step = 0.1 * 1 / (1 + 1e-9)
  const double expect = 0.5 - 0.1 / (1.0 + 1e-9);
  CHECK(params[0].data()[0] == doctest::Approx(expect).epsilon(1e-7));
}

TEST_CASE("adam: minimizes (w - 3)^2") {
  std::vector<TF> params{TF::from_data({1}, {0.0f}, true)};
  auto state = nn::OptimState::for_parameters(params);
  for (int i = 0; i < 100; ++i) {
    params[0].zero_grad();
    auto diff = nn::add(params[0], TF::full({1}, -3.0f));
    nn::sum(nn::mul(diff, diff)).backward();
    nn::adam_step(params, state, 0.1);
  }
  CHECK(std::abs(params[0].data()[0] - 3.0f) < 0.5f);
  CHECK(state.step == 100);
}

TEST_CASE("adam: shape mismatch is a configuration error") {
  std::vector<TF> params{TF::zeros({2}, true)};
  auto state = nn::OptimState::for_parameters(params);
  std::vector<TF> other{TF::zeros({3}, true)};
  CHECK_THROWS_AS(nn::adam_step(other, state, 0.1), ConfigError);
}

TEST_CASE("gradient clipping rescales to the requested norm") {
  std::vector<TF> params{TF::zeros({2}, true)};
  params[0].mutable_grad()[0] = 3.0f;
  params[0].mutable_grad()[1] = 4.0f;
  CHECK(nn::clip_grad_norm(params, 1.0) == doctest::Approx(5.0));
  CHECK(params[0].grad()[0] == doctest::Approx(0.6));
  CHECK(params[0].grad()[1] == doctest::Approx(0.8));
}
