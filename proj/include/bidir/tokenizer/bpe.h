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

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace bidir::text {

inline constexpr std::string_view kEndOfWord = "</w>";

struct MergeRule {
  std::string left;
  std::string right;

  auto operator<=>(const MergeRule&) const = default;
};

// Ordered list of merge rules; earlier rules take priority when applied.
class BpeModel {
 public:
  BpeModel() = default;

  // Rejects duplicate rules with DataError.
  static BpeModel from_merges(std::vector<MergeRule> merges);

  // Greedy learner over whitespace-split words. Each word starts as its UTF-8
  // characters with "</w>" fused onto the last one. Every iteration merges
  // the most frequent adjacent pair (ties: lexicographically smallest pair)
  // until num_merges rules exist or no pair reaches min_frequency.
  static BpeModel learn(std::span<const std::string> corpus, std::size_t num_merges,
                        std::size_t min_frequency = 2);

  // "left right" per line, in priority order.
  static BpeModel load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const std::vector<MergeRule>& merges() const { return merges_; }
  std::size_t num_merges() const { return merges_.size(); }

  // Deterministic segmentation of a whitespace-normalized line.
  std::vector<std::string> apply(std::string_view line) const;
  std::vector<std::string> segment_word(std::string_view word) const;

  bool operator==(const BpeModel& other) const { return merges_ == other.merges_; }

 private:
  std::vector<MergeRule> merges_;
  std::map<std::pair<std::string, std::string>, std::size_t, std::less<>> rank_;
};

// UTF-8 code points of `word`; invalid bytes come out as single-byte symbols.
std::vector<std::string> split_utf8(std::string_view word);

// Collapses runs of whitespace to one space and trims both ends.
std::string normalize_whitespace(std::string_view line);

std::vector<std::string> split_words(std::string_view line);

// Inverse of BpeModel::apply: joins subwords, turning "</w>" into a space.
std::string detokenize(std::span<const std::string> subwords);

// ASCII-only lowercasing; multi-byte sequences are left untouched.
std::string ascii_lower(std::string_view s);

}  // namespace bidir::text
