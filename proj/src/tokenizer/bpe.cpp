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

#include "bidir/tokenizer/bpe.h"

#include <cctype>
#include <cstdint>
#include <fstream>
#include <set>

#include "bidir/errors.h"

namespace bidir::text {

namespace {

using Pair = std::pair<std::string, std::string>;

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::vector<std::string> initial_symbols(std::string_view word) {
  auto symbols = split_utf8(word);
  if (!symbols.empty()) symbols.back() += kEndOfWord;
  return symbols;
}

// Replaces every non-overlapping occurrence of (left, right), scanning left
// to right.
void merge_pair(std::vector<std::string>& symbols, const std::string& left, const std::string& right) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == left && symbols[i + 1] == right) {
      out.push_back(left + right);
      ++i;
    } else {
      out.push_back(std::move(symbols[i]));
    }
  }
  symbols = std::move(out);
}

// Pair statistics for the learner. `queue` orders pairs by descending count,
// then lexicographically, so its first element is always the next merge.
class PairStats {
 public:
  void add(const Pair& p, std::int64_t delta, std::size_t word) {
    auto& count = counts_[p];
    if (count > 0) queue_.erase({-count, p});
    count += delta;
    if (count > 0) queue_.insert({-count, p});
    if (delta > 0) where_[p].insert(word);
  }

  bool empty() const { return queue_.empty(); }
  std::int64_t best_count() const { return -queue_.begin()->first; }
  const Pair& best() const { return queue_.begin()->second; }
  std::set<std::size_t> words_with(const Pair& p) const {
    auto it = where_.find(p);
    return it == where_.end() ? std::set<std::size_t>{} : it->second;
  }

 private:
  std::map<Pair, std::int64_t> counts_;
  std::set<std::pair<std::int64_t, Pair>> queue_;
  std::map<Pair, std::set<std::size_t>> where_;
};

void tally(PairStats& stats, const std::vector<std::string>& symbols, std::int64_t freq, std::size_t word) {
  for (std::size_t i = 0; i + 1 < symbols.size(); ++i) stats.add({symbols[i], symbols[i + 1]}, freq, word);
}

}  // namespace

std::vector<std::string> split_utf8(std::string_view word) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < word.size()) {
    std::size_t len = utf8_length(static_cast<unsigned char>(word[i]));
    if (i + len > word.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(word[i + k]) & 0xC0) != 0x80) {
        len = 1;
        break;
      }
    }
    out.emplace_back(word.substr(i, len));
    i += len;
  }
  return out;
}

std::string normalize_whitespace(std::string_view line) {
  std::string out;
  bool pending_space = false;
  for (char c : line) {
    if (is_space(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) words.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return words;
}

std::string detokenize(std::span<const std::string> subwords) {
  std::string out;
  for (const auto& s : subwords) {
    std::string_view v = s;
    if (v.size() >= kEndOfWord.size() && v.substr(v.size() - kEndOfWord.size()) == kEndOfWord) {
      out.append(v.substr(0, v.size() - kEndOfWord.size()));
      out.push_back(' ');
    } else {
      out.append(v);
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

BpeModel BpeModel::from_merges(std::vector<MergeRule> merges) {
  BpeModel model;
  for (std::size_t i = 0; i < merges.size(); ++i) {
    if (merges[i].left.empty() || merges[i].right.empty()) throw DataError("merge rule with an empty side");
    if (!model.rank_.emplace(Pair{merges[i].left, merges[i].right}, i).second) {
      throw DataError("duplicate merge rule '" + merges[i].left + " " + merges[i].right + "'");
    }
  }
  model.merges_ = std::move(merges);
  return model;
}

BpeModel BpeModel::learn(std::span<const std::string> corpus, std::size_t num_merges, std::size_t min_frequency) {
  if (corpus.empty()) throw UsageError("learn_bpe: empty corpus");
  std::map<std::string, std::int64_t> word_counts;
  for (const auto& line : corpus) {
    for (auto& w : split_words(line)) ++word_counts[w];
  }
  if (word_counts.empty()) throw UsageError("learn_bpe: corpus contains no words");

  std::vector<std::vector<std::string>> words;
  std::vector<std::int64_t> freqs;
  for (const auto& [w, n] : word_counts) {
    words.push_back(initial_symbols(w));
    freqs.push_back(n);
  }
  PairStats stats;
  for (std::size_t i = 0; i < words.size(); ++i) tally(stats, words[i], freqs[i], i);

  std::vector<MergeRule> merges;
  const auto floor = static_cast<std::int64_t>(std::max<std::size_t>(min_frequency, 1));
  while (merges.size() < num_merges && !stats.empty() && stats.best_count() >= floor) {
    const Pair best = stats.best();
    for (std::size_t w : stats.words_with(best)) {
      tally(stats, words[w], -freqs[w], w);
      merge_pair(words[w], best.first, best.second);
      tally(stats, words[w], freqs[w], w);
    }
    merges.push_back({best.first, best.second});
  }
  return from_merges(std::move(merges));
}

BpeModel BpeModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open merge file " + path.string());
  std::vector<MergeRule> merges;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_words(line);
    if (fields.size() != 2) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 'left right'");
    }
    merges.push_back({fields[0], fields[1]});
  }
  return from_merges(std::move(merges));
}

void BpeModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write merge file " + path.string());
  for (const auto& m : merges_) out << m.left << ' ' << m.right << '\n';
}

std::vector<std::string> BpeModel::segment_word(std::string_view word) const {
  auto symbols = initial_symbols(word);
  while (symbols.size() > 1) {
    std::size_t best_rank = merges_.size();
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      auto it = rank_.find(Pair{symbols[i], symbols[i + 1]});
      if (it != rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_at = i;
      }
    }
    if (best_rank == merges_.size()) break;
    const Pair chosen{symbols[best_at], symbols[best_at + 1]};
    merge_pair(symbols, chosen.first, chosen.second);
  }
  return symbols;
}

std::vector<std::string> BpeModel::apply(std::string_view line) const {
  std::vector<std::string> out;
  for (const auto& w : split_words(line)) {
    auto pieces = segment_word(w);
    out.insert(out.end(), std::make_move_iterator(pieces.begin()), std::make_move_iterator(pieces.end()));
  }
  return out;
}

}  // namespace bidir::text
