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

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bidir/model/direction.h"

namespace bidir::eval {

using Tokens = std::vector<std::string>;

struct BleuReport {
  double bleu = 0.0;  // [0, 100]
  std::array<double, 4> precisions{};
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  double brevity_penalty = 0.0;
  std::size_t hypothesis_length = 0;
  std::size_t reference_length = 0;

  nlohmann::json to_json() const;
};

// Corpus-level 4-gram BLEU with clipped counts and no smoothing: a zero
// precision at any order gives 0. UsageError on empty or unequal inputs.
BleuReport bleu(std::span<const Tokens> hypotheses, std::span<const Tokens> references, bool lowercase = false);
// Lines split on whitespace.
BleuReport bleu(std::span<const std::string> hypotheses, std::span<const std::string> references,
                bool lowercase = false);

// International-style tokenization applied before scoring raw text:
// punctuation and symbols split off, digits' separators kept together.
std::string tokenize_13a(std::string_view line);

struct PositionAccuracyReport {
  std::optional<double> first_n;  // unset when no sentence qualifies
  std::optional<double> last_n;
  std::size_t n = 0;
  std::size_t sentences = 0;  // sentences with both sides at least n long

  nlohmann::json to_json() const;
};

// Position-wise agreement of the first n and last n tokens, averaged over
// sentences where both sides have at least n tokens.
PositionAccuracyReport position_accuracy(std::span<const Tokens> hypotheses, std::span<const Tokens> references,
                                         std::size_t n);

struct DirectionShareReport {
  std::size_t l2r = 0;
  std::size_t r2l = 0;
  double l2r_share = 0.0;  // both shares are 0 when there are no winners
  double r2l_share = 0.0;

  nlohmann::json to_json() const;
};

DirectionShareReport direction_share(std::span<const model::Direction> winner_origins);

std::vector<std::string> split_whitespace(std::string_view line);

}  // namespace bidir::eval
