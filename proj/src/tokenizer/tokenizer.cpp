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

#include "bidir/tokenizer/tokenizer.h"

namespace bidir::text {

std::vector<std::string> Tokenizer::segment(std::string_view line) const {
  std::string text = lowercase ? ascii_lower(line) : std::string(line);
  if (bpe) return bpe->apply(text);
  return split_words(text);
}

std::vector<TokenId> Tokenizer::encode(std::string_view line) const {
  auto pieces = segment(line);
  return vocab.encode(pieces);
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> pieces;
  for (TokenId id : ids) {
    if (is_special(id) && id != kUnk) continue;
    pieces.push_back(vocab.token(id));
  }
  if (bpe) return detokenize(pieces);
  std::string out;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (i) out.push_back(' ');
    out += pieces[i];
  }
  return out;
}

}  // namespace bidir::text
