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

#include "bidir/inference/decoder.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "bidir/errors.h"

namespace bidir::inference {

namespace {

struct Live {
  std::vector<TokenId> prefix;  // start token, then generated ids
  double score = 0.0;
};

struct Extension {
  double score;
  std::size_t parent;
  TokenId token;
};

Hypothesis make_hypothesis(const std::vector<TokenId>& prefix, Direction d, double score, bool finished) {
  Hypothesis h;
  h.tokens.assign(prefix.begin() + 1, prefix.end());
  if (d == Direction::kR2L) std::reverse(h.tokens.begin(), h.tokens.end());
  h.origin = d;
  h.finished = finished;
  h.set_logprob(d, score);
  return h;
}

double combined_of(const Hypothesis& h, const DecodeConfig& config) {
  double c = *h.logprob_l2r + *h.logprob_r2l;
  if (config.normalize_combined) c /= length_penalty(h.tokens.size() + 1, config.alpha);
  if (!h.finished) c += config.unfinished_penalty;
  return c;
}

}  // namespace

TieBreak parse_tie_break(std::string_view s) {
  if (s == "prefer_l2r") return TieBreak::kPreferL2R;
  if (s == "prefer_r2l") return TieBreak::kPreferR2L;
  throw UsageError("unknown tie_break '" + std::string(s) + "' (expected prefer_l2r or prefer_r2l)");
}

std::string_view to_string(TieBreak t) { return t == TieBreak::kPreferL2R ? "prefer_l2r" : "prefer_r2l"; }

void DecodeConfig::validate() const {
  if (beam < 1) throw ConfigError("beam must be at least 1");
  if (beam > max_beam) {
    throw ConfigError("beam " + std::to_string(beam) + " exceeds the cap of " + std::to_string(max_beam));
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a finite value >= 0");
  if (max_len < 1) throw ConfigError("max_len must be at least 1");
  if (std::isnan(unfinished_penalty) || unfinished_penalty > 0.0) {
    throw ConfigError("unfinished_penalty must be <= 0");
  }
}

double length_penalty(std::size_t n, double alpha) {
  return std::pow((5.0 + static_cast<double>(n)) / 6.0, alpha);
}

std::vector<TokenId> emittable_tokens(std::size_t tgt_vocab_size) {
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < tgt_vocab_size; ++i) {
    auto id = static_cast<TokenId>(i);
    if (id != text::kPad && id != text::kSosL2R && id != text::kSosR2L) out.push_back(id);
  }
  return out;
}

std::size_t exhaustive_beam(std::size_t tgt_vocab_size, std::size_t max_len) {
  const std::size_t content = emittable_tokens(tgt_vocab_size).size() - 1;
  const std::size_t cap = std::numeric_limits<std::size_t>::max() / std::max<std::size_t>(content, 2) / 2;
  std::size_t total = 0, power = 1;  // power = content^n
  for (std::size_t n = 0; n < max_len; ++n) {
    total += power;  // finished strings with n content tokens
    if (power > cap) return std::numeric_limits<std::size_t>::max();
    power *= content;
  }
  return total + power;  // plus every string cut off at the cap
}

double Hypothesis::origin_logprob() const {
  auto v = logprob(origin);
  if (!v) throw UsageError("hypothesis lacks its origin log-probability");
  return *v;
}

template <typename T>
std::vector<Hypothesis> beam_search(const model::Transformer<T>& model, const model::EncodedSource<T>& enc,
                                    Direction direction, const DecodeConfig& config) {
  config.validate();
  const auto alphabet = emittable_tokens(model.config().tgt_vocab_size);
  const std::size_t k = config.beam;
  const std::size_t max_len = std::min(config.max_len, model.config().max_positions);

  std::vector<Live> live{{{model::start_token(direction)}, 0.0}};
  std::vector<std::pair<double, Hypothesis>> finished, capped;

  for (std::size_t step = 1; step <= max_len && !live.empty() && finished.size() < k; ++step) {
    std::vector<std::vector<TokenId>> prefixes;
    prefixes.reserve(live.size());
    for (const auto& l : live) prefixes.push_back(l.prefix);
    const auto logprobs = model.next_token_logprobs(prefixes, enc);

    std::vector<Extension> ext;
    ext.reserve(live.size() * alphabet.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
      for (auto w : alphabet) ext.push_back({live[i].score + logprobs[i][static_cast<std::size_t>(w)], i, w});
    }
    // Every extension has the same length here, so the normalized order is
    // the raw order.
    const std::size_t slots = std::min(k - finished.size(), ext.size());
    auto better = [](const Extension& a, const Extension& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.token < b.token;
    };
    std::partial_sort(ext.begin(), ext.begin() + static_cast<std::ptrdiff_t>(slots), ext.end(), better);

    const double lp = length_penalty(step, config.alpha);
    std::vector<Live> next;
    for (std::size_t j = 0; j < slots; ++j) {
      const auto& e = ext[j];
      const auto& parent = live[e.parent];
      if (e.token == text::kEos) {
        finished.emplace_back(e.score / lp, make_hypothesis(parent.prefix, direction, e.score, true));
        continue;
      }
      Live child{parent.prefix, e.score};
      child.prefix.push_back(e.token);
      if (step == max_len) {
        capped.emplace_back(e.score / lp, make_hypothesis(child.prefix, direction, e.score, false));
      } else {
        next.push_back(std::move(child));
      }
    }
    live = std::move(next);
  }

  auto& pool = finished.empty() ? capped : finished;
  std::stable_sort(pool.begin(), pool.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Hypothesis> out;
  for (std::size_t i = 0; i < pool.size() && i < k; ++i) out.push_back(std::move(pool[i].second));
  return out;
}

template <typename T>
std::vector<Hypothesis> beam_search(const model::Transformer<T>& model, std::span<const TokenId> source,
                                    Direction direction, const DecodeConfig& config) {
  nn::NoGradGuard no_grad;
  auto enc = model.encode(source);
  return beam_search(model, enc, direction, config);
}

template <typename T>
void cross_rescore(const model::Transformer<T>& model, const model::EncodedSource<T>& enc,
                   std::vector<Hypothesis>& hypotheses) {
  std::vector<std::vector<TokenId>> targets;
  std::vector<Direction> dirs;
  std::vector<std::size_t> which;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    for (auto d : {Direction::kL2R, Direction::kR2L}) {
      if (!hypotheses[i].logprob(d)) {
        targets.push_back(hypotheses[i].tokens);
        dirs.push_back(d);
        which.push_back(i);
      }
    }
  }
  if (targets.empty()) return;
  auto scores = model.score_targets(enc, targets, dirs);
  for (std::size_t j = 0; j < which.size(); ++j) hypotheses[which[j]].set_logprob(dirs[j], scores[j].total);
}

std::vector<ScoredCandidate> score_candidates(std::vector<Hypothesis> hypotheses, const DecodeConfig& config) {
  std::vector<ScoredCandidate> out;
  for (auto& h : hypotheses) {
    if (!h.logprob_l2r || !h.logprob_r2l) throw UsageError("score_candidates: hypothesis not rescored");
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const ScoredCandidate& c) { return c.hypothesis.tokens == h.tokens; });
    if (it == out.end()) {
      out.push_back({std::move(h), 0.0});
      continue;
    }
    auto& kept = it->hypothesis;
    if (kept.origin != h.origin) {
      // Each direction keeps the score recorded by its own beam.
      kept.set_logprob(h.origin, h.origin_logprob());
      kept.found_by_both = true;
      kept.finished = kept.finished || h.finished;
      const Direction preferred =
          config.tie_break == TieBreak::kPreferL2R ? Direction::kL2R : Direction::kR2L;
      kept.origin = preferred;
    }
  }
  for (auto& c : out) c.combined_score = combined_of(c.hypothesis, config);
  return out;
}

const ScoredCandidate& select_best(std::span<const ScoredCandidate> candidates, TieBreak tie_break) {
  if (candidates.empty()) throw UsageError("select_best: no candidates");
  const Direction preferred = tie_break == TieBreak::kPreferL2R ? Direction::kL2R : Direction::kR2L;
  const ScoredCandidate* best = &candidates.front();
  for (const auto& c : candidates.subspan(1)) {
    const auto& a = c.hypothesis;
    const auto& b = best->hypothesis;
    bool take;
    if (c.combined_score != best->combined_score) {
      take = c.combined_score > best->combined_score;
    } else if (a.origin != b.origin) {
      take = a.origin == preferred;
    } else {
      take = a.tokens < b.tokens;
    }
    if (take) best = &c;
  }
  return *best;
}

Mode parse_mode(std::string_view s) {
  if (s == "bidi") return Mode::kBidirectional;
  if (s == "l2r") return Mode::kL2R;
  if (s == "r2l") return Mode::kR2L;
  if (s == "l2r-pool-only") return Mode::kL2RPoolOnly;
  throw UsageError("unknown mode '" + std::string(s) + "' (expected bidi, l2r, r2l or l2r-pool-only)");
}

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::kBidirectional: return "bidi";
    case Mode::kL2R: return "l2r";
    case Mode::kR2L: return "r2l";
    case Mode::kL2RPoolOnly: return "l2r-pool-only";
  }
  return "bidi";
}

template <typename T>
Translation translate(const model::Transformer<T>& model, std::span<const TokenId> source,
                      const DecodeConfig& config, Mode mode) {
  config.validate();
  auto& counters = model.counters();
  const auto enc_before = counters.encoded_sources.load();
  const auto rows_before = counters.teacher_forced_rows.load();

  nn::NoGradGuard no_grad;
  Translation out;
  const auto enc = model.encode(source);
  if (mode == Mode::kL2R || mode == Mode::kR2L) {
    const Direction d = mode == Mode::kL2R ? Direction::kL2R : Direction::kR2L;
    out.beam = beam_search(model, enc, d, config);
    out.best = out.beam.front();
    if (config.report_combined) {
      std::vector<Hypothesis> one{out.best};
      cross_rescore(model, enc, one);
      out.best = one.front();
      out.combined_score = combined_of(out.best, config);
    }
  } else {
    std::vector<Hypothesis> pool = beam_search(model, enc, Direction::kL2R, config);
    if (mode == Mode::kBidirectional) {
      auto r2l = beam_search(model, enc, Direction::kR2L, config);
      pool.insert(pool.end(), r2l.begin(), r2l.end());
    }
    cross_rescore(model, enc, pool);
    out.candidates = score_candidates(std::move(pool), config);
    const auto& best = select_best(out.candidates, config.tie_break);
    out.best = best.hypothesis;
    out.combined_score = best.combined_score;
  }
  out.encoder_calls = counters.encoded_sources.load() - enc_before;
  out.rescored_rows = counters.teacher_forced_rows.load() - rows_before;
  return out;
}

#define BIDIR_INSTANTIATE_DECODER(T)                                                                       \
  template std::vector<Hypothesis> beam_search(const model::Transformer<T>&, const model::EncodedSource<T>&, \
                                               Direction, const DecodeConfig&);                            \
  template std::vector<Hypothesis> beam_search(const model::Transformer<T>&, std::span<const TokenId>,      \
                                               Direction, const DecodeConfig&);                            \
  template void cross_rescore(const model::Transformer<T>&, const model::EncodedSource<T>&,                \
                              std::vector<Hypothesis>&);                                                   \
  template Translation translate(const model::Transformer<T>&, std::span<const TokenId>, const DecodeConfig&, \
                                 Mode);

BIDIR_INSTANTIATE_DECODER(float)
BIDIR_INSTANTIATE_DECODER(double)

}  // namespace bidir::inference
