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

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bidir/tokenizer/bpe.h"
#include "bidir/tokenizer/vocab.h"

namespace bidir::text {

// One side of a language pair: optional BPE model plus vocabulary. The same
// instance can serve both sides when the vocabulary is shared.
struct Tokenizer {
  std::optional<BpeModel> bpe;  // absent: input is already segmented
  Vocab vocab;
  bool lowercase = false;

  std::vector<std::string> segment(std::string_view line) const;
  // Subword ids without EOS.
  std::vector<TokenId> encode(std::string_view line) const;
  // Drops special tokens and undoes the subword split.
  std::string decode(std::span<const TokenId> ids) const;
};

}  // namespace bidir::text
