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

#include "bidir/model/direction.h"

#include <algorithm>
#include <string>

#include "bidir/errors.h"

namespace bidir::model {

std::string_view to_string(Direction d) { return d == Direction::kL2R ? "l2r" : "r2l"; }

Direction parse_direction(std::string_view s) {
  if (s == "l2r") return Direction::kL2R;
  if (s == "r2l") return Direction::kR2L;
  throw UsageError("unknown direction '" + std::string(s) + "', expected l2r or r2l");
}

std::vector<text::TokenId> content_of(std::span<const text::TokenId> target) {
  std::vector<text::TokenId> out(target.begin(), target.end());
  if (!out.empty() && out.back() == text::kEos) out.pop_back();
  return out;
}

std::vector<text::TokenId> decoder_input(std::span<const text::TokenId> target, Direction d) {
  auto content = content_of(target);
  if (d == Direction::kR2L) std::reverse(content.begin(), content.end());
  content.insert(content.begin(), start_token(d));
  return content;
}

std::vector<text::TokenId> gold_output(std::span<const text::TokenId> target, Direction d) {
  auto content = content_of(target);
  if (d == Direction::kR2L) std::reverse(content.begin(), content.end());
  content.push_back(text::kEos);
  return content;
}

}  // namespace bidir::model
