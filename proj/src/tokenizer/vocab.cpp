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

#include "bidir/tokenizer/vocab.h"

#include <algorithm>
#include <fstream>
#include <map>

#include "bidir/errors.h"

namespace bidir::text {

Vocab::Vocab() {
  for (auto s : kSpecialTokens) add(std::string(s));
}

void Vocab::add(std::string token) {
  if (token.empty()) throw DataError("vocabulary entries must be non-empty");
  auto id = static_cast<TokenId>(tokens_.size());
  if (!index_.emplace(token, id).second) throw DataError("duplicate vocabulary entry '" + token + "'");
  tokens_.push_back(std::move(token));
}

Vocab Vocab::from_tokens(std::span<const std::string> tokens) {
  Vocab v;
  for (const auto& t : tokens) v.add(t);
  return v;
}

Vocab Vocab::build(std::span<const std::vector<std::string>> corpus) {
  std::map<std::string, std::size_t> counts;
  for (const auto& line : corpus) {
    for (const auto& t : line) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    bool reserved = std::find(kSpecialTokens.begin(), kSpecialTokens.end(), tok) != kSpecialTokens.end();
    if (!reserved) ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (auto& [tok, n] : ranked) v.add(tok);
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (lines.size() < kNumSpecial) throw DataError(path.string() + ": vocabulary is missing special tokens");
  for (std::size_t i = 0; i < kNumSpecial; ++i) {
    if (lines[i] != kSpecialTokens[i]) {
      throw DataError(path.string() + ": line " + std::to_string(i + 1) + " must be " +
                      std::string(kSpecialTokens[i]));
    }
  }
  return from_tokens(std::span(lines).subspan(kNumSpecial));
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write vocabulary file " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

bool Vocab::contains(std::string_view token) const { return index_.find(std::string(token)) != index_.end(); }

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                    std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocab::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

std::vector<std::string> Vocab::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId i : ids) out.push_back(token(i));
  return out;
}

}  // namespace bidir::text
