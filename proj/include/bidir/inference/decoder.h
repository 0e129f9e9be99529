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
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "bidir/model/transformer.h"

namespace bidir::inference {

using model::Direction;
using text::TokenId;

enum class TieBreak { kPreferL2R, kPreferR2L };
TieBreak parse_tie_break(std::string_view s);  // prefer_l2r | prefer_r2l
std::string_view to_string(TieBreak t);

struct DecodeConfig {
  std::size_t beam = 4;
  double alpha = 0.6;         // length penalty exponent
  std::size_t max_len = 200;  // generated tokens, EOS included
  TieBreak tie_break = TieBreak::kPreferL2R;
  // Divide the combined score by lp(|y| + 1) before selection.
  bool normalize_combined = false;
  // Added to the combined score of length-capped hypotheses. The default
  // keeps them out unless nothing finished.
  double unfinished_penalty = -std::numeric_limits<double>::infinity();
  std::size_t max_beam = 4096;
  // Single-direction modes: also rescore the winner in the other direction
  // so its combined score can be reported.
  bool report_combined = false;

  // ConfigError unless 1 <= beam <= max_beam, alpha >= 0, max_len >= 1.
  void validate() const;
};

// ((5 + n) / 6)^alpha
double length_penalty(std::size_t n, double alpha);

// Beam width at which beam search keeps every string of up to max_len
// generated tokens over the emittable alphabet.
std::size_t exhaustive_beam(std::size_t tgt_vocab_size, std::size_t max_len);

// Ids beam search may emit: everything except PAD and the start tokens.
std::vector<TokenId> emittable_tokens(std::size_t tgt_vocab_size);

struct Hypothesis {
  std::vector<TokenId> tokens;  // natural order, no start token or EOS
  Direction origin = Direction::kL2R;
  std::optional<double> logprob_l2r;
  std::optional<double> logprob_r2l;
  bool finished = true;
  bool found_by_both = false;

  // Raw log-probability under the generation direction.
  double origin_logprob() const;
  std::optional<double> logprob(Direction d) const { return d == Direction::kL2R ? logprob_l2r : logprob_r2l; }
  void set_logprob(Direction d, double v) { (d == Direction::kL2R ? logprob_l2r : logprob_r2l) = v; }
};

struct ScoredCandidate {
  Hypothesis hypothesis;
  double combined_score = 0.0;
  const std::vector<TokenId>& dedup_key() const { return hypothesis.tokens; }
};

// Length-normalized beam search in one direction against source 0 of enc.
// Each step scores every live prefix against the emittable alphabet and
// keeps the best (K - finished) extensions; extensions ending in EOS retire.
// Returns finished hypotheses best first, or, if none finished within
// max_len, the length-capped ones flagged unfinished.
template <typename T>
std::vector<Hypothesis> beam_search(const model::Transformer<T>& model, const model::EncodedSource<T>& enc,
                                    Direction direction, const DecodeConfig& config);
template <typename T>
std::vector<Hypothesis> beam_search(const model::Transformer<T>& model, std::span<const TokenId> source,
                                    Direction direction, const DecodeConfig& config);

// Fills every missing direction with one batched teacher-forced pass.
template <typename T>
void cross_rescore(const model::Transformer<T>& model, const model::EncodedSource<T>& enc,
                   std::vector<Hypothesis>& hypotheses);

// Merges candidates with identical tokens and attaches combined scores.
// Every hypothesis must carry both log-probabilities.
std::vector<ScoredCandidate> score_candidates(std::vector<Hypothesis> hypotheses, const DecodeConfig& config);

// Argmax of combined_score. Exact ties go to the preferred origin, then to
// the lexicographically smaller token sequence. UsageError if empty.
const ScoredCandidate& select_best(std::span<const ScoredCandidate> candidates, TieBreak tie_break);

enum class Mode { kBidirectional, kL2R, kR2L, kL2RPoolOnly };
Mode parse_mode(std::string_view s);  // bidi | l2r | r2l | l2r-pool-only
std::string_view to_string(Mode m);

struct Translation {
  Hypothesis best;
  std::optional<double> combined_score;  // single-direction modes: only with report_combined
  std::vector<ScoredCandidate> candidates;  // empty in single-direction modes
  std::vector<Hypothesis> beam;             // the single-direction n-best
  std::uint64_t encoder_calls = 0;
  std::uint64_t rescored_rows = 0;
};

// Runs the encoder once, then beam search per the mode. bidi: both beams,
// cross-rescoring and selection by combined score. l2r-pool-only: the same
// selection over L2R candidates only. l2r / r2l: the beam's top hypothesis.
template <typename T>
Translation translate(const model::Transformer<T>& model, std::span<const TokenId> source,
                      const DecodeConfig& config, Mode mode = Mode::kBidirectional);

}  // namespace bidir::inference
