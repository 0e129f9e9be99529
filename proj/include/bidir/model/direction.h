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
#include <string_view>
#include <vector>

#include "bidir/tokenizer/vocab.h"

namespace bidir::model {

enum class Direction : std::uint8_t { kL2R = 0, kR2L = 1 };

inline constexpr Direction opposite(Direction d) {
  return d == Direction::kL2R ? Direction::kR2L : Direction::kL2R;
}

inline constexpr text::TokenId start_token(Direction d) {
  return d == Direction::kL2R ? text::kSosL2R : text::kSosR2L;
}

std::string_view to_string(Direction d);
// "l2r" or "r2l"; UsageError otherwise.
Direction parse_direction(std::string_view s);

// Strips a trailing EOS if present; the remaining ids are the content.
std::vector<text::TokenId> content_of(std::span<const text::TokenId> target);

// Decoder input for a natural-order target: the direction start token, then
// the content (reversed for R2L). EOS never appears in the input.
std::vector<text::TokenId> decoder_input(std::span<const text::TokenId> target, Direction d);

// Gold output aligned with decoder_input: the content in generation order,
// then EOS. For both directions EOS stays the terminal symbol.
std::vector<text::TokenId> gold_output(std::span<const text::TokenId> target, Direction d);

}  // namespace bidir::model
