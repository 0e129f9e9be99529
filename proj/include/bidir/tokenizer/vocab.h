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
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace bidir::text {

using TokenId = std::int32_t;

// Reserved ids. Both direction start tokens are ordinary vocabulary entries,
// so each gets its own learned row in the decoder embedding table.
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kSosL2R = 3;
inline constexpr TokenId kSosR2L = 4;
inline constexpr std::size_t kNumSpecial = 5;

inline constexpr std::array<std::string_view, kNumSpecial> kSpecialTokens = {
    "<pad>", "<unk>", "</s>", "<s_l2r>", "<s_r2l>"};

inline bool is_special(TokenId id) { return id >= 0 && id < static_cast<TokenId>(kNumSpecial); }

class Vocab {
 public:
  // Special tokens only.
  Vocab();

  // Appends `tokens` after the specials, in the given order. Duplicates and
  // reserved strings are rejected with DataError.
  static Vocab from_tokens(std::span<const std::string> tokens);

  // Collects every distinct token in a tokenized corpus, ordered by
  // descending frequency, then lexicographically.
  static Vocab build(std::span<const std::vector<std::string>> corpus);

  // One token per line, line number == id; the first five lines must be the
  // special tokens in reserved order.
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;
  // kUnk for strings outside the vocabulary.
  TokenId id(std::string_view token) const;
  // DataError when id is out of range.
  const std::string& token(TokenId id) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const TokenId> ids) const;

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace bidir::text
