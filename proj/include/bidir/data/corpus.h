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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bidir/model/direction.h"
#include "bidir/tokenizer/tokenizer.h"

namespace bidir::data {

using model::Direction;
using text::TokenId;

// Targets are stored in natural order for both directions; reversal happens
// only when decoder inputs and gold outputs are materialized.
struct SentencePair {
  std::vector<TokenId> source;  // EOS-terminated
  std::vector<TokenId> target;  // natural order, EOS-terminated
  Direction direction = Direction::kL2R;

  bool operator==(const SentencePair&) const = default;
};

struct Corpus {
  std::vector<SentencePair> pairs;
  std::size_t dropped = 0;  // over-length or empty pairs skipped at load
};

// Appends EOS to both sides.
SentencePair make_pair(std::span<const TokenId> source, std::span<const TokenId> target);

// Tokenizes aligned lines. Pairs with an empty side or more than max_len
// tokens (EOS included) on either side are dropped and counted.
Corpus make_corpus(std::span<const std::string> source_lines, std::span<const std::string> target_lines,
                   const text::Tokenizer& source_tok, const text::Tokenizer& target_tok,
                   std::size_t max_len = 256);

// DataError naming both files when their line counts differ.
Corpus load_parallel(const std::filesystem::path& source_path, const std::filesystem::path& target_path,
                     const text::Tokenizer& source_tok, const text::Tokenizer& target_tok,
                     std::size_t max_len = 256);

std::vector<std::string> read_lines(const std::filesystem::path& path);

// The right-to-left companion of an L2R pair. UsageError on an R2L pair.
SentencePair reverse_pair(const SentencePair& pair);

std::vector<TokenId> decoder_input(const SentencePair& pair);
std::vector<TokenId> gold_output(const SentencePair& pair);

enum class DirectionMode { kBoth, kL2ROnly, kR2LOnly };
DirectionMode parse_direction_mode(std::string_view s);  // both | l2r | r2l
std::string_view to_string(DirectionMode m);

struct PaddedIds {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<TokenId> ids;         // rows * cols, kPad where padded
  std::vector<std::uint8_t> mask;   // 1 marks padding
};

PaddedIds pad_rows(std::span<const std::vector<TokenId>> rows);

struct Batch {
  // Each distinct source appears once and is encoded once; row r of the
  // decoder side reads source source_of_row[r].
  std::vector<std::vector<TokenId>> sources;
  std::vector<std::int32_t> source_of_row;
  std::vector<std::vector<TokenId>> decoder_inputs;
  std::vector<std::vector<TokenId>> gold_outputs;
  std::vector<Direction> directions;
  std::vector<std::size_t> pair_index;  // corpus position of each row

  std::size_t rows() const { return decoder_inputs.size(); }
  std::size_t target_tokens() const;  // non-pad gold tokens, EOS included
  std::size_t source_tokens() const;  // over rows, i.e. per direction
  std::size_t count(Direction d) const;

  PaddedIds padded_source() const;  // one row per decoder row
  PaddedIds padded_decoder_input() const { return pad_rows(decoder_inputs); }
  PaddedIds padded_gold_output() const { return pad_rows(gold_outputs); }
};

// Rows for the given pairs in the given directions, in order.
Batch make_batch(std::span<const SentencePair> pairs, std::span<const std::size_t> indices,
                 std::span<const Direction> directions);

struct BatchOptions {
  std::size_t token_budget = 4096;
  std::uint64_t seed = 1;
  std::uint64_t epoch = 0;
  DirectionMode directions = DirectionMode::kBoth;
  // Both directions of a pair land in the same batch; when false they are
  // shuffled as independent rows.
  bool co_occur = true;
  double bucket_tolerance = 0.2;
};

// Shuffles (seeded by seed and epoch), buckets by length, then gathers
// units until source or target tokens would pass the budget. With co_occur
// a unit is one pair in both directions, so each side of the pairs fills at
// most token_budget / 2. DataError if a single unit exceeds the budget.
std::vector<Batch> make_batches(const Corpus& corpus, const BatchOptions& options);

}  // namespace bidir::data
