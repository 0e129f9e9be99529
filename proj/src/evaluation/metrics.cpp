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

#include "bidir/evaluation/metrics.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <regex>

#include "bidir/errors.h"
#include "bidir/tokenizer/bpe.h"

namespace bidir::eval {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const Tokens& t, std::size_t n) {
  NgramCounts c;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++c[Tokens(t.begin() + i, t.begin() + i + n)];
  return c;
}

Tokens lowered(const Tokens& t) {
  Tokens out;
  out.reserve(t.size());
  for (const auto& s : t) out.push_back(text::ascii_lower(s));
  return out;
}

}  // namespace

std::vector<std::string> split_whitespace(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

BleuReport bleu(std::span<const Tokens> hypotheses, std::span<const Tokens> references, bool lowercase) {
  if (hypotheses.size() != references.size()) {
    throw UsageError("bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                     std::to_string(references.size()) + " references");
  }
  if (hypotheses.empty()) throw UsageError("bleu: empty corpus");
  BleuReport r;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const Tokens hyp = lowercase ? lowered(hypotheses[s]) : hypotheses[s];
    const Tokens ref = lowercase ? lowered(references[s]) : references[s];
    r.hypothesis_length += hyp.size();
    r.reference_length += ref.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto hc = count_ngrams(hyp, n);
      const auto rc = count_ngrams(ref, n);
      for (const auto& [gram, count] : hc) {
        auto it = rc.find(gram);
        if (it != rc.end()) r.matches[n - 1] += std::min(count, it->second);
      }
      r.totals[n - 1] += hyp.size() >= n ? hyp.size() - n + 1 : 0;
    }
  }
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    r.precisions[n] = r.totals[n] ? static_cast<double>(r.matches[n]) / static_cast<double>(r.totals[n]) : 0.0;
    if (r.matches[n] == 0) {
      zero = true;
    } else {
      log_sum += std::log(r.precisions[n]);
    }
  }
  const double c = static_cast<double>(r.hypothesis_length);
  const double ref_len = static_cast<double>(r.reference_length);
  if (r.hypothesis_length == 0) {
    r.brevity_penalty = 0.0;
  } else {
    r.brevity_penalty = c < ref_len ? std::exp(1.0 - ref_len / c) : 1.0;
  }
  r.bleu = zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

BleuReport bleu(std::span<const std::string> hypotheses, std::span<const std::string> references, bool lowercase) {
  std::vector<Tokens> h, r;
  for (const auto& s : hypotheses) h.push_back(split_whitespace(s));
  for (const auto& s : references) r.push_back(split_whitespace(s));
  return bleu(std::span<const Tokens>(h), std::span<const Tokens>(r), lowercase);
}

nlohmann::json BleuReport::to_json() const {
  return {{"bleu", bleu},
          {"precisions", precisions},
          {"matches", matches},
          {"totals", totals},
          {"brevity_penalty", brevity_penalty},
          {"hypothesis_length", hypothesis_length},
          {"reference_length", reference_length}};
}

std::string tokenize_13a(std::string_view line) {
  static const std::regex symbols(R"(([\{-\~\[-\` -\&\(-\+\:-\@\/]))");
  static const std::regex period_comma_after_non_digit(R"(([^0-9])([\.,]))");
  static const std::regex period_comma_before_non_digit(R"(([\.,])([^0-9]))");
  static const std::regex dash_after_digit(R"(([0-9])(-))");
  std::string s(line);
  std::replace(s.begin(), s.end(), '\n', ' ');
  for (const auto& [from, to] : std::initializer_list<std::pair<std::string_view, std::string_view>>{
           {"&quot;", "\""}, {"&amp;", "&"}, {"&lt;", "<"}, {"&gt;", ">"}}) {
    for (std::size_t pos; (pos = s.find(from)) != std::string::npos;) s.replace(pos, from.size(), to);
  }
  s = " " + s + " ";
  s = std::regex_replace(s, symbols, " $1 ");
  s = std::regex_replace(s, period_comma_after_non_digit, "$1 $2 ");
  s = std::regex_replace(s, period_comma_before_non_digit, " $1 $2");
  s = std::regex_replace(s, dash_after_digit, "$1 $2 ");
  std::string out;
  for (const auto& t : split_whitespace(s)) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

PositionAccuracyReport position_accuracy(std::span<const Tokens> hypotheses, std::span<const Tokens> references,
                                         std::size_t n) {
  if (n < 1) throw UsageError("position_accuracy: n must be at least 1");
  if (hypotheses.size() != references.size()) throw UsageError("position_accuracy: unequal corpus sizes");
  PositionAccuracyReport r;
  r.n = n;
  double first = 0.0, last = 0.0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& h = hypotheses[s];
    const auto& ref = references[s];
    if (h.size() < n || ref.size() < n) continue;
    std::size_t f = 0, l = 0;
    for (std::size_t i = 0; i < n; ++i) {
      f += h[i] == ref[i];
      l += h[h.size() - 1 - i] == ref[ref.size() - 1 - i];
    }
    first += static_cast<double>(f) / static_cast<double>(n);
    last += static_cast<double>(l) / static_cast<double>(n);
    ++r.sentences;
  }
  if (r.sentences > 0) {
    r.first_n = first / static_cast<double>(r.sentences);
    r.last_n = last / static_cast<double>(r.sentences);
  }
  return r;
}

nlohmann::json PositionAccuracyReport::to_json() const {
  nlohmann::json j{{"n", n}, {"sentences", sentences}};
  j["first_n"] = first_n ? nlohmann::json(*first_n) : nlohmann::json(nullptr);
  j["last_n"] = last_n ? nlohmann::json(*last_n) : nlohmann::json(nullptr);
  return j;
}

DirectionShareReport direction_share(std::span<const model::Direction> winner_origins) {
  DirectionShareReport r;
  for (auto d : winner_origins) (d == model::Direction::kL2R ? r.l2r : r.r2l) += 1;
  const std::size_t total = r.l2r + r.r2l;
  if (total > 0) {
    r.l2r_share = static_cast<double>(r.l2r) / static_cast<double>(total);
    r.r2l_share = static_cast<double>(r.r2l) / static_cast<double>(total);
  }
  return r;
}

nlohmann::json DirectionShareReport::to_json() const {
  return {{"l2r", l2r}, {"r2l", r2l}, {"l2r_share", l2r_share}, {"r2l_share", r2l_share}};
}

}  // namespace bidir::eval
