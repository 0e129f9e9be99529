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

#include <doctest.h>

#include <cmath>
#include <limits>

#include "bidir/errors.h"
#include "bidir/inference/decoder.h"
#include "support/tiny.h"

using namespace bidir;
using namespace bidir::inference;
using model::Direction;
using text::TokenId;

namespace {

const std::vector<TokenId> kSource{5, 6, 6, text::kEos};

DecodeConfig config(std::size_t beam, std::size_t max_len = 4, double alpha = 0.0) {
  DecodeConfig c;
  c.beam = beam;
  c.max_len = max_len;
  c.alpha = alpha;
  return c;
}

Hypothesis hyp(std::vector<TokenId> tokens, Direction origin, double l2r, double r2l) {
  Hypothesis h;
  h.tokens = std::move(tokens);
  h.origin = origin;
  h.logprob_l2r = l2r;
  h.logprob_r2l = r2l;
  return h;
}

}  // namespace

TEST_CASE("length penalty and exhaustive beam width") {
  CHECK(length_penalty(1, 0.0) == 1.0);
  CHECK(length_penalty(1, 1.0) == doctest::Approx(1.0));
  CHECK(length_penalty(7, 0.6) == doctest::Approx(std::pow(2.0, 0.6)));
  // 4 emittable symbols, 3 of them non-EOS: 1 + 3 + 9 + 27 finished, 81 capped.
  CHECK(exhaustive_beam(7, 4) == 121);
  CHECK(emittable_tokens(7) == std::vector<TokenId>{text::kUnk, text::kEos, 5, 6});
}

TEST_CASE("decode config validation") {
  CHECK_THROWS_AS(config(0).validate(), ConfigError);
  auto c = config(5000);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = config(2);
  c.alpha = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = config(2, 0);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_mode("l2r-pool-only") == Mode::kL2RPoolOnly);
  CHECK_THROWS_AS(parse_mode("both"), UsageError);
}

TEST_CASE("beam of one is greedy decoding") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto m = testing::tiny_model<float>(seed);
    auto enc = m.encode(kSource);
    for (auto dir : {Direction::kL2R, Direction::kR2L}) {
      bool finished = false;
      auto greedy = testing::greedy_decode(m, enc, dir, 6, &finished);
      auto beam = beam_search(m, enc, dir, config(1, 6, 0.6));
      REQUIRE(beam.size() == 1);
      CHECK(beam.front().tokens == greedy);
      CHECK(beam.front().finished == finished);
    }
  }
}

TEST_CASE("recorded log-probabilities match teacher forcing") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto m = testing::tiny_model<float>(seed);
    auto enc = m.encode(kSource);
    for (auto dir : {Direction::kL2R, Direction::kR2L}) {
      for (const auto& h : beam_search(m, enc, dir, config(5, 5, 1.0))) {
        REQUIRE(h.finished);
        CHECK(h.origin == dir);
        CHECK(h.logprob(dir).has_value());
        CHECK_FALSE(h.logprob(model::opposite(dir)).has_value());
        CHECK(std::abs(h.origin_logprob() - m.sequence_logprob(kSource, h.tokens, dir).total) < 1e-4);
        for (auto t : h.tokens) CHECK_FALSE((text::is_special(t) && t != text::kUnk));
      }
    }
  }
}

TEST_CASE("hypotheses come back best first under the length penalty") {
  auto m = testing::tiny_model<float>(3);
  auto hs = beam_search(m, kSource, Direction::kL2R, config(6, 5, 0.8));
  for (std::size_t i = 1; i < hs.size(); ++i) {
    CHECK(hs[i - 1].origin_logprob() / length_penalty(hs[i - 1].tokens.size() + 1, 0.8) >=
          hs[i].origin_logprob() / length_penalty(hs[i].tokens.size() + 1, 0.8));
  }
}

TEST_CASE("a model that never emits EOS yields unfinished hypotheses") {
  auto c = testing::tiny_config();
  c.tied_embeddings = false;
  nn::Rng rng(4);
  auto m = model::Transformer<float>::initialized(c, rng);
  for (auto& v : m.parameter("decoder.final_ln.gain").mutable_data()) v = 0.0f;
  for (auto& v : m.parameter("decoder.final_ln.bias").mutable_data()) v = 1.0f;
  auto w = m.parameter("output_proj").mutable_data();
  for (std::size_t i = 0; i < c.d_model; ++i) {
    for (std::size_t j = 0; j < c.tgt_vocab_size; ++j) w[i * c.tgt_vocab_size + j] = j == text::kEos ? -4.0f : 0.0f;
  }
  auto hs = beam_search(m, kSource, Direction::kL2R, config(3, 3));
  REQUIRE(hs.size() == 3);
  for (const auto& h : hs) {
    CHECK_FALSE(h.finished);
    CHECK(h.tokens.size() == 3);
  }
  // Unfinished candidates lose to any finished one and are kept only as a
  // last resort.
  auto t = translate(m, kSource, config(3, 3));
  CHECK_FALSE(t.best.finished);
  CHECK(t.combined_score == -std::numeric_limits<double>::infinity());
}

TEST_CASE("cross-rescoring fills the missing direction in one batched pass") {
  auto m = testing::tiny_model<double>(5);
  auto enc = m.encode(kSource);
  auto hs = beam_search(m, enc, Direction::kL2R, config(4));
  auto r2l = beam_search(m, enc, Direction::kR2L, config(4));
  hs.insert(hs.end(), r2l.begin(), r2l.end());
  const auto before = hs;
  const auto calls = m.counters().decoder_calls.load();
  const auto rows = m.counters().teacher_forced_rows.load();
  cross_rescore(m, enc, hs);
  CHECK(m.counters().decoder_calls.load() - calls == 1);
  CHECK(m.counters().teacher_forced_rows.load() - rows == hs.size());
  for (std::size_t i = 0; i < hs.size(); ++i) {
    const auto dir = hs[i].origin;
    CHECK(*hs[i].logprob(dir) == *before[i].logprob(dir));
    const auto other = model::opposite(dir);
    CHECK(std::abs(*hs[i].logprob(other) - m.sequence_logprob(kSource, hs[i].tokens, other).total) < 1e-6);
  }
  const auto calls_after = m.counters().decoder_calls.load();
  cross_rescore(m, enc, hs);
  CHECK(m.counters().decoder_calls.load() == calls_after);
}

TEST_CASE("select_best") {
  std::vector<ScoredCandidate> empty;
  CHECK_THROWS_AS(select_best(empty, TieBreak::kPreferL2R), UsageError);

  auto one = score_candidates({hyp({5}, Direction::kR2L, -1.0, -2.0)}, config(1));
  CHECK(select_best(one, TieBreak::kPreferL2R).hypothesis.tokens == std::vector<TokenId>{5});
  CHECK(one.front().combined_score == -3.0);

  auto cands = score_candidates({hyp({5}, Direction::kL2R, -1.0, -2.0), hyp({6}, Direction::kR2L, -2.5, -0.25),
                                 hyp({5, 6}, Direction::kL2R, -0.5, -3.0)},
                                config(3));
  const auto& best = select_best(cands, TieBreak::kPreferL2R);
  for (const auto& c : cands) CHECK(best.combined_score >= c.combined_score);
  CHECK(best.hypothesis.tokens == std::vector<TokenId>{6});

  auto tied = score_candidates({hyp({6}, Direction::kL2R, -1.0, -1.0), hyp({5}, Direction::kR2L, -1.5, -0.5),
                                hyp({5}, Direction::kL2R, -1.25, -0.75)},
                               config(3));
  REQUIRE(tied.size() == 2);  // {5} merged
  CHECK(tied[1].hypothesis.found_by_both);
  CHECK(tied[1].hypothesis.origin == Direction::kL2R);
  CHECK(select_best(tied, TieBreak::kPreferL2R).hypothesis.tokens == std::vector<TokenId>{5});
  auto pref_r2l = config(3);
  pref_r2l.tie_break = TieBreak::kPreferR2L;
  auto tied_r = score_candidates({hyp({6}, Direction::kL2R, -1.0, -1.0), hyp({5}, Direction::kR2L, -1.5, -0.5)},
                                 pref_r2l);
  CHECK(select_best(tied_r, TieBreak::kPreferR2L).hypothesis.tokens == std::vector<TokenId>{5});
  CHECK(select_best(tied_r, TieBreak::kPreferL2R).hypothesis.tokens == std::vector<TokenId>{6});
  auto same_origin = score_candidates({hyp({6}, Direction::kL2R, -1.0, -1.0), hyp({5}, Direction::kL2R, -1.0, -1.0)},
                                      config(2));
  CHECK(select_best(same_origin, TieBreak::kPreferL2R).hypothesis.tokens == std::vector<TokenId>{5});
}

TEST_CASE("optional combined normalization and unfinished penalty") {
  auto c = config(2, 4, 1.0);
  c.normalize_combined = true;
  auto cands = score_candidates({hyp({5, 6, 5}, Direction::kL2R, -2.0, -2.0)}, c);
  CHECK(cands.front().combined_score == doctest::Approx(-4.0 / length_penalty(4, 1.0)));
  auto u = hyp({5}, Direction::kL2R, -1.0, -1.0);
  u.finished = false;
  auto d = config(2);
  d.unfinished_penalty = -10.0;
  CHECK(score_candidates({u}, d).front().combined_score == -12.0);
}

TEST_CASE("translate: encoder once, combined score consistency, determinism, modes") {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    auto m = testing::tiny_model<double>(seed);
    auto t = translate(m, kSource, config(3, 5, 0.6));
    CHECK(t.encoder_calls == 1);
    REQUIRE(t.combined_score.has_value());
    CHECK(t.rescored_rows == t.candidates.size() + [&] {
      std::size_t both = 0;
      for (const auto& c : t.candidates) both += c.hypothesis.found_by_both;
      return both;
    }());
    const double direct = m.sequence_logprob(kSource, t.best.tokens, Direction::kL2R).total +
                          m.sequence_logprob(kSource, t.best.tokens, Direction::kR2L).total;
    CHECK(std::abs(*t.combined_score - direct) < 1e-5);
    auto again = translate(m, kSource, config(3, 5, 0.6));
    CHECK(again.best.tokens == t.best.tokens);
    CHECK(*again.combined_score == *t.combined_score);

    auto pool = translate(m, kSource, config(3, 5, 0.6), Mode::kL2RPoolOnly);
    for (const auto& c : pool.candidates) CHECK(c.hypothesis.origin == Direction::kL2R);
    CHECK(*t.combined_score >= *pool.combined_score);

    auto l2r_cfg = config(3, 5, 0.6);
    l2r_cfg.report_combined = true;
    auto l2r = translate(m, kSource, l2r_cfg, Mode::kL2R);
    CHECK(l2r.encoder_calls == 1);
    CHECK(l2r.candidates.empty());
    CHECK(*t.combined_score >= *l2r.combined_score);
    auto plain = translate(m, kSource, config(3, 5, 0.6), Mode::kR2L);
    CHECK_FALSE(plain.combined_score.has_value());
    CHECK(plain.rescored_rows == 0);
    CHECK(plain.best.origin == Direction::kR2L);
  }
}

TEST_CASE("mirrored model gives the mirrored decision") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto m = testing::tiny_model<double>(seed);
    auto mirror = testing::mirrored(m);
    auto a = translate(m, kSource, config(4, 5, 0.0));
    auto b = translate(mirror, kSource, config(4, 5, 0.0));
    CHECK(std::abs(*a.combined_score - *b.combined_score) < 1e-9);
    auto reversed = b.best.tokens;
    std::reverse(reversed.begin(), reversed.end());
    CHECK(a.candidates.size() == b.candidates.size());
    // Equal scores can only tie-break differently; the winner must match
    // whenever its score is unique.
    std::size_t at_best = 0;
    for (const auto& c : a.candidates) at_best += std::abs(c.combined_score - *a.combined_score) < 1e-12;
    if (at_best == 1) CHECK(reversed == a.best.tokens);
  }
}
