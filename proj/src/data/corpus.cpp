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

#include "bidir/data/corpus.h"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "bidir/errors.h"
#include "bidir/numeric/random.h"

namespace bidir::data {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Fisher-Yates on our own generator so the order does not depend on the
// standard library's shuffle.
template <typename V>
void shuffle(std::vector<V>& v, nn::Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

struct Unit {
  std::size_t pair;
  std::vector<Direction> dirs;
  std::size_t src_tokens;
  std::size_t tgt_tokens;
};

}  // namespace

SentencePair make_pair(std::span<const TokenId> source, std::span<const TokenId> target) {
  SentencePair p;
  p.source.assign(source.begin(), source.end());
  p.source.push_back(text::kEos);
  p.target.assign(target.begin(), target.end());
  p.target.push_back(text::kEos);
  return p;
}

Corpus make_corpus(std::span<const std::string> source_lines, std::span<const std::string> target_lines,
                   const text::Tokenizer& source_tok, const text::Tokenizer& target_tok,
                   std::size_t max_len) {
  if (source_lines.size() != target_lines.size()) {
    throw DataError("parallel line count mismatch: " + std::to_string(source_lines.size()) + " vs " +
                    std::to_string(target_lines.size()));
  }
  Corpus c;
  for (std::size_t i = 0; i < source_lines.size(); ++i) {
    auto s = source_tok.encode(source_lines[i]);
    auto t = target_tok.encode(target_lines[i]);
    if (s.empty() || t.empty() || s.size() + 1 > max_len || t.size() + 1 > max_len) {
      ++c.dropped;
      continue;
    }
    c.pairs.push_back(data::make_pair(s, t));
  }
  return c;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

Corpus load_parallel(const std::filesystem::path& source_path, const std::filesystem::path& target_path,
                     const text::Tokenizer& source_tok, const text::Tokenizer& target_tok,
                     std::size_t max_len) {
  auto src = read_lines(source_path);
  auto tgt = read_lines(target_path);
  if (src.size() != tgt.size()) {
    throw DataError("line count mismatch: " + source_path.string() + " has " + std::to_string(src.size()) +
                    " lines, " + target_path.string() + " has " + std::to_string(tgt.size()));
  }
  return make_corpus(src, tgt, source_tok, target_tok, max_len);
}

SentencePair reverse_pair(const SentencePair& pair) {
  if (pair.direction != Direction::kL2R) throw UsageError("reverse_pair expects an L2R pair");
  SentencePair r = pair;
  r.direction = Direction::kR2L;
  return r;
}

std::vector<TokenId> decoder_input(const SentencePair& pair) {
  return model::decoder_input(pair.target, pair.direction);
}

std::vector<TokenId> gold_output(const SentencePair& pair) {
  return model::gold_output(pair.target, pair.direction);
}

DirectionMode parse_direction_mode(std::string_view s) {
  if (s == "both") return DirectionMode::kBoth;
  if (s == "l2r") return DirectionMode::kL2ROnly;
  if (s == "r2l") return DirectionMode::kR2LOnly;
  throw UsageError("unknown direction mode '" + std::string(s) + "' (expected both, l2r or r2l)");
}

std::string_view to_string(DirectionMode m) {
  switch (m) {
    case DirectionMode::kBoth: return "both";
    case DirectionMode::kL2ROnly: return "l2r";
    case DirectionMode::kR2LOnly: return "r2l";
  }
  return "both";
}

PaddedIds pad_rows(std::span<const std::vector<TokenId>> rows) {
  PaddedIds p;
  p.rows = rows.size();
  for (const auto& r : rows) p.cols = std::max(p.cols, r.size());
  p.ids.assign(p.rows * p.cols, text::kPad);
  p.mask.assign(p.rows * p.cols, 1);
  for (std::size_t i = 0; i < p.rows; ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      p.ids[i * p.cols + j] = rows[i][j];
      p.mask[i * p.cols + j] = 0;
    }
  }
  return p;
}

std::size_t Batch::target_tokens() const {
  std::size_t n = 0;
  for (const auto& g : gold_outputs) n += g.size();
  return n;
}

std::size_t Batch::source_tokens() const {
  std::size_t n = 0;
  for (auto s : source_of_row) n += sources[static_cast<std::size_t>(s)].size();
  return n;
}

std::size_t Batch::count(Direction d) const {
  return static_cast<std::size_t>(std::count(directions.begin(), directions.end(), d));
}

PaddedIds Batch::padded_source() const {
  std::vector<std::vector<TokenId>> rows;
  rows.reserve(source_of_row.size());
  for (auto s : source_of_row) rows.push_back(sources[static_cast<std::size_t>(s)]);
  return pad_rows(rows);
}

Batch make_batch(std::span<const SentencePair> pairs, std::span<const std::size_t> indices,
                 std::span<const Direction> directions) {
  if (indices.size() != directions.size()) throw UsageError("make_batch: indices and directions differ in length");
  Batch b;
  std::vector<std::pair<std::size_t, std::int32_t>> seen;  // pair index -> source slot
  for (std::size_t r = 0; r < indices.size(); ++r) {
    std::size_t idx = indices[r];
    if (idx >= pairs.size()) throw UsageError("make_batch: pair index out of range");
    SentencePair p = pairs[idx];
    if (p.direction != Direction::kL2R) throw UsageError("make_batch expects L2R pairs");
    if (directions[r] == Direction::kR2L) p = reverse_pair(p);
    auto it = std::find_if(seen.begin(), seen.end(), [&](const auto& e) { return e.first == idx; });
    std::int32_t slot;
    if (it != seen.end()) {
      slot = it->second;
    } else {
      slot = static_cast<std::int32_t>(b.sources.size());
      b.sources.push_back(p.source);
      seen.emplace_back(idx, slot);
    }
    b.source_of_row.push_back(slot);
    b.decoder_inputs.push_back(decoder_input(p));
    b.gold_outputs.push_back(gold_output(p));
    b.directions.push_back(p.direction);
    b.pair_index.push_back(idx);
  }
  return b;
}

std::vector<Batch> make_batches(const Corpus& corpus, const BatchOptions& options) {
  if (options.token_budget == 0) throw ConfigError("token_budget must be positive");
  nn::Rng rng(splitmix64(options.seed ^ splitmix64(options.epoch + 1)));

  std::vector<Direction> dirs;
  if (options.directions != DirectionMode::kR2LOnly) dirs.push_back(Direction::kL2R);
  if (options.directions != DirectionMode::kL2ROnly) dirs.push_back(Direction::kR2L);

  std::vector<Unit> units;
  for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
    const auto& p = corpus.pairs[i];
    if (options.co_occur) {
      units.push_back({i, dirs, p.source.size() * dirs.size(), p.target.size() * dirs.size()});
    } else {
      for (auto d : dirs) units.push_back({i, {d}, p.source.size(), p.target.size()});
    }
  }
  for (const auto& u : units) {
    if (u.src_tokens > options.token_budget || u.tgt_tokens > options.token_budget) {
      throw DataError("pair " + std::to_string(u.pair) + " needs " +
                      std::to_string(std::max(u.src_tokens, u.tgt_tokens)) + " tokens, over the budget of " +
                      std::to_string(options.token_budget));
    }
  }

  shuffle(units, rng);
  std::stable_sort(units.begin(), units.end(), [&](const Unit& a, const Unit& b) {
    const auto& pa = corpus.pairs[a.pair];
    const auto& pb = corpus.pairs[b.pair];
    return std::pair(pa.target.size(), pa.source.size()) < std::pair(pb.target.size(), pb.source.size());
  });

  std::vector<Batch> batches;
  std::vector<std::size_t> idx;
  std::vector<Direction> row_dirs;
  std::size_t src = 0, tgt = 0, anchor = 0;
  auto flush = [&] {
    if (idx.empty()) return;
    batches.push_back(make_batch(corpus.pairs, idx, row_dirs));
    idx.clear();
    row_dirs.clear();
    src = tgt = 0;
  };
  for (const auto& u : units) {
    std::size_t len = corpus.pairs[u.pair].target.size();
    bool over_budget = src + u.src_tokens > options.token_budget || tgt + u.tgt_tokens > options.token_budget;
    bool off_bucket = !idx.empty() &&
                      static_cast<double>(len) > static_cast<double>(anchor) * (1.0 + options.bucket_tolerance);
    if (over_budget || off_bucket) flush();
    if (idx.empty()) anchor = len;
    for (auto d : u.dirs) {
      idx.push_back(u.pair);
      row_dirs.push_back(d);
    }
    src += u.src_tokens;
    tgt += u.tgt_tokens;
  }
  flush();
  shuffle(batches, rng);
  return batches;
}

}  // namespace bidir::data
