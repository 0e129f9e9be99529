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

#include "bidir/model/transformer.h"

#include <algorithm>
#include <array>
#include <cmath>

#include "bidir/errors.h"
#include "bidir/numeric/ops.h"

namespace bidir::model {

namespace {

constexpr double kMaskedScore = -1e9;

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

// Splits [b, t, h * dk] into [b * h, t, dk].
template <typename T>
nn::Tensor<T> split_heads(const nn::Tensor<T>& x, std::size_t b, std::size_t t, std::size_t heads) {
  const std::size_t dk = x.dim(2) / heads;
  static constexpr std::array<std::size_t, 4> perm{0, 2, 1, 3};
  auto y = nn::transpose(nn::reshape(x, {b, t, heads, dk}), std::span<const std::size_t>(perm));
  return nn::reshape(y, {b * heads, t, dk});
}

template <typename T>
nn::Tensor<T> merge_heads(const nn::Tensor<T>& x, std::size_t b, std::size_t t, std::size_t heads) {
  const std::size_t dk = x.dim(2);
  static constexpr std::array<std::size_t, 4> perm{0, 2, 1, 3};
  auto y = nn::transpose(nn::reshape(x, {b, heads, t, dk}), std::span<const std::size_t>(perm));
  return nn::reshape(y, {b, t, heads * dk});
}

// mask[b, h, i, j] = padding[b * keys + j]
std::vector<std::uint8_t> key_padding_mask(std::span<const std::uint8_t> padding, std::size_t batch,
                                           std::size_t heads, std::size_t queries, std::size_t keys) {
  std::vector<std::uint8_t> mask(batch * heads * queries * keys);
  auto* out = mask.data();
  for (std::size_t b = 0; b < batch; ++b) {
    const auto* row = padding.data() + b * keys;
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < queries; ++i) {
        std::copy_n(row, keys, out);
        out += keys;
      }
    }
  }
  return mask;
}

std::vector<std::uint8_t> causal_mask(std::size_t batch, std::size_t heads, std::size_t len) {
  std::vector<std::uint8_t> mask(batch * heads * len * len, 0);
  for (std::size_t bh = 0; bh < batch * heads; ++bh) {
    auto* m = mask.data() + bh * len * len;
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = i + 1; j < len; ++j) m[i * len + j] = 1;
    }
  }
  return mask;
}

}  // namespace

void ForwardCounters::reset() {
  encoded_sources = 0;
  decoder_calls = 0;
  decoder_rows = 0;
  teacher_forced_rows = 0;
}

template <typename T>
Transformer<T>::Transformer(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  build();
  const std::size_t d = config_.d_model;
  positional_.resize(config_.max_positions * d);
  for (std::size_t pos = 0; pos < config_.max_positions; ++pos) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
      positional_[pos * d + i] = static_cast<T>(std::sin(static_cast<double>(pos) * freq));
      if (i + 1 < d) positional_[pos * d + i + 1] = static_cast<T>(std::cos(static_cast<double>(pos) * freq));
    }
  }
}

template <typename T>
std::size_t Transformer<T>::add_param(std::string name, nn::Shape shape, T fill) {
  params_.push_back({std::move(name), nn::Tensor<T>::full(std::move(shape), fill, true)});
  return params_.size() - 1;
}

template <typename T>
void Transformer<T>::build() {
  const std::size_t d = config_.d_model, ff = config_.d_ff;
  auto layer_norm = [&](const std::string& prefix) {
    std::size_t gain = add_param(prefix + ".gain", {d}, T(1));
    add_param(prefix + ".bias", {d});
    return gain;
  };
  auto attention = [&](const std::string& prefix) {
    AttentionWeights w{};
    for (auto [slot, tag] : {std::pair{&w.q, "q"}, {&w.k, "k"}, {&w.v, "v"}, {&w.o, "o"}}) {
      *slot = add_param(prefix + "." + tag + ".weight", {d, d});
      add_param(prefix + "." + tag + ".bias", {d});
    }
    return w;
  };
  auto ffn = [&](const std::string& prefix) {
    std::size_t w1 = add_param(prefix + ".w1", {d, ff});
    add_param(prefix + ".b1", {ff});
    add_param(prefix + ".w2", {ff, d});
    add_param(prefix + ".b2", {d});
    return w1;
  };

  src_embed_ = add_param("src_embed", {config_.src_vocab_size, d});
  tgt_embed_ = add_param("tgt_embed", {config_.tgt_vocab_size, d});
  for (std::size_t i = 0; i < config_.num_encoder_layers; ++i) {
    const std::string pre = "encoder." + std::to_string(i);
    EncoderLayer layer{};
    layer.ln1 = layer_norm(pre + ".ln1");
    layer.self_attn = attention(pre + ".self_attn");
    layer.ln2 = layer_norm(pre + ".ln2");
    layer.ffn = ffn(pre + ".ffn");
    enc_layers_.push_back(layer);
  }
  enc_final_ln_ = layer_norm("encoder.final_ln");
  for (std::size_t i = 0; i < config_.num_decoder_layers; ++i) {
    const std::string pre = "decoder." + std::to_string(i);
    DecoderLayer layer{};
    layer.ln1 = layer_norm(pre + ".ln1");
    layer.self_attn = attention(pre + ".self_attn");
    layer.ln2 = layer_norm(pre + ".ln2");
    layer.cross_attn = attention(pre + ".cross_attn");
    layer.ln3 = layer_norm(pre + ".ln3");
    layer.ffn = ffn(pre + ".ffn");
    dec_layers_.push_back(layer);
  }
  dec_final_ln_ = layer_norm("decoder.final_ln");
  output_proj_ = config_.tied_embeddings ? tgt_embed_ : add_param("output_proj", {d, config_.tgt_vocab_size});
}

template <typename T>
Transformer<T> Transformer<T>::initialized(ModelConfig config, nn::Rng& rng) {
  Transformer model(std::move(config));
  const double embed_std = 1.0 / std::sqrt(static_cast<double>(model.config_.d_model));
  for (auto& [name, tensor] : model.params_) {
    auto values = tensor.mutable_data();
    if (name == "src_embed" || name == "tgt_embed") {
      for (auto& v : values) v = static_cast<T>(rng.truncated_normal() * embed_std);
    } else if (tensor.rank() == 2) {
      const double bound = std::sqrt(6.0 / static_cast<double>(tensor.dim(0) + tensor.dim(1)));
      for (auto& v : values) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
    } else if (ends_with(name, ".gain")) {
      std::fill(values.begin(), values.end(), T(1));
    } else {
      std::fill(values.begin(), values.end(), T(0));
    }
  }
  return model;
}

template <typename T>
std::vector<nn::Tensor<T>> Transformer<T>::parameter_tensors() const {
  std::vector<nn::Tensor<T>> out;
  out.reserve(params_.size());
  for (const auto& np : params_) out.push_back(np.tensor);
  return out;
}

template <typename T>
std::size_t Transformer<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& np : params_) n += np.tensor.numel();
  return n;
}

template <typename T>
const nn::Tensor<T>& Transformer<T>::parameter(std::string_view name) const {
  for (const auto& np : params_) {
    if (np.name == name) return np.tensor;
  }
  throw ConfigError("no parameter named '" + std::string(name) + "'");
}

template <typename T>
nn::Tensor<T>& Transformer<T>::parameter(std::string_view name) {
  return const_cast<nn::Tensor<T>&>(std::as_const(*this).parameter(name));
}

template <typename T>
void Transformer<T>::zero_grad() {
  for (auto& np : params_) np.tensor.zero_grad();
}

template <typename T>
nn::Tensor<T> Transformer<T>::embed(const nn::Tensor<T>& table, std::span<const TokenId> ids, std::size_t rows,
                                    std::size_t len, bool train, nn::Rng* rng) const {
  const std::size_t d = config_.d_model;
  auto x = nn::scale(nn::embedding(table, ids), static_cast<T>(std::sqrt(static_cast<double>(d))));
  std::vector<T> pe(rows * len * d);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(positional_.data(), len * d, pe.data() + r * len * d);
  }
  x = nn::add(nn::reshape(x, {rows, len, d}), nn::Tensor<T>::from_data({rows, len, d}, std::move(pe)));
  if (train && config_.dropout > 0.0) x = nn::dropout(x, config_.dropout, train, *rng);
  return x;
}

template <typename T>
nn::Tensor<T> Transformer<T>::project(const nn::Tensor<T>& x, std::size_t weight) const {
  return nn::linear(x, p(weight), p(weight + 1));
}

template <typename T>
nn::Tensor<T> Transformer<T>::attention(const AttentionWeights& w, const nn::Tensor<T>& query_in,
                                        const nn::Tensor<T>& keys, const nn::Tensor<T>& values,
                                        std::span<const std::uint8_t> mask, bool train, nn::Rng* rng) const {
  const std::size_t d = config_.d_model, heads = config_.num_heads;
  const std::size_t rows = query_in.dim(0), tq = query_in.dim(1);
  const std::size_t bk = keys.dim(0), tk = keys.dim(1);
  // Shared memory: fold all query rows into one long sequence.
  const std::size_t b = bk;
  const std::size_t t = bk == rows ? tq : rows * tq;
  if (bk != rows && bk != 1) throw ConfigError("attention: memory batch does not match query batch");

  auto q = nn::scale(project(query_in, w.q), static_cast<T>(1.0 / std::sqrt(static_cast<double>(d / heads))));
  auto qh = split_heads(nn::reshape(q, {b, t, d}), b, t, heads);
  auto kh = split_heads(keys, b, tk, heads);
  auto vh = split_heads(values, b, tk, heads);
  auto scores = nn::masked_fill(nn::bmm(qh, kh, true), mask, static_cast<T>(kMaskedScore));
  auto probs = nn::softmax(scores);
  if (train && config_.dropout > 0.0) probs = nn::dropout(probs, config_.dropout, train, *rng);
  auto ctx = merge_heads(nn::bmm(probs, vh), b, t, heads);
  return project(nn::reshape(ctx, {rows, tq, d}), w.o);
}

template <typename T>
nn::Tensor<T> Transformer<T>::feed_forward(const nn::Tensor<T>& x, std::size_t w1, bool train, nn::Rng* rng) const {
  auto h = nn::relu(nn::linear(x, p(w1), p(w1 + 1)));
  if (train && config_.dropout > 0.0) h = nn::dropout(h, config_.dropout, train, *rng);
  return nn::linear(h, p(w1 + 2), p(w1 + 3));
}

template <typename T>
EncodedSource<T> Transformer<T>::encode(std::span<const std::vector<TokenId>> sources, bool train,
                                        nn::Rng* rng) const {
  if (sources.empty()) throw UsageError("encode: no sources");
  if (train && config_.dropout > 0.0 && rng == nullptr) throw UsageError("encode: training needs an rng");
  const std::size_t heads = config_.num_heads;
  EncodedSource<T> enc;
  enc.batch = sources.size();
  for (const auto& s : sources) {
    if (s.empty()) throw DataError("encode: empty source sequence");
    if (s.size() > config_.max_positions) {
      throw DataError("encode: source of length " + std::to_string(s.size()) + " exceeds max_positions " +
                      std::to_string(config_.max_positions));
    }
    enc.lengths.push_back(s.size());
    enc.length = std::max(enc.length, s.size());
  }
  const std::size_t len = enc.length;
  std::vector<TokenId> ids(enc.batch * len, text::kPad);
  enc.key_padding.assign(enc.batch * len, 1);
  for (std::size_t b = 0; b < enc.batch; ++b) {
    for (std::size_t j = 0; j < sources[b].size(); ++j) {
      const TokenId id = sources[b][j];
      if (id < 0 || static_cast<std::size_t>(id) >= config_.src_vocab_size) {
        throw DataError("encode: source id " + std::to_string(id) + " outside vocabulary");
      }
      ids[b * len + j] = id;
      enc.key_padding[b * len + j] = 0;
    }
  }

  auto x = embed(p(src_embed_), ids, enc.batch, len, train, rng);
  const auto mask = key_padding_mask(enc.key_padding, enc.batch, heads, len, len);
  for (const auto& layer : enc_layers_) {
    auto h = nn::layer_norm(x, p(layer.ln1), p(layer.ln1 + 1));
    auto a = attention(layer.self_attn, h, project(h, layer.self_attn.k), project(h, layer.self_attn.v), mask,
                       train, rng);
    if (train && config_.dropout > 0.0) a = nn::dropout(a, config_.dropout, train, *rng);
    x = nn::add(x, a);
    h = nn::layer_norm(x, p(layer.ln2), p(layer.ln2 + 1));
    auto f = feed_forward(h, layer.ffn, train, rng);
    if (train && config_.dropout > 0.0) f = nn::dropout(f, config_.dropout, train, *rng);
    x = nn::add(x, f);
  }
  enc.hidden = nn::layer_norm(x, p(enc_final_ln_), p(enc_final_ln_ + 1));
  for (const auto& layer : dec_layers_) {
    enc.memory_keys.push_back(project(enc.hidden, layer.cross_attn.k));
    enc.memory_values.push_back(project(enc.hidden, layer.cross_attn.v));
  }
  counters_.encoded_sources += enc.batch;
  return enc;
}

template <typename T>
EncodedSource<T> Transformer<T>::encode(std::span<const TokenId> source) const {
  std::vector<std::vector<TokenId>> one{std::vector<TokenId>(source.begin(), source.end())};
  return encode(one);
}

template <typename T>
nn::Tensor<T> Transformer<T>::decode(const EncodedSource<T>& enc, std::span<const std::vector<TokenId>> inputs,
                                     std::span<const std::int32_t> memory_rows, bool train, nn::Rng* rng) const {
  if (inputs.empty()) throw UsageError("decode: no decoder inputs");
  if (memory_rows.size() != inputs.size()) throw UsageError("decode: one memory row per input is required");
  if (train && config_.dropout > 0.0 && rng == nullptr) throw UsageError("decode: training needs an rng");
  const std::size_t heads = config_.num_heads, vocab = config_.tgt_vocab_size;
  const std::size_t rows = inputs.size();
  std::size_t len = 0;
  for (const auto& in : inputs) {
    if (in.empty() || (in.front() != text::kSosL2R && in.front() != text::kSosR2L)) {
      throw UsageError("decode: every decoder input must start with a direction start token");
    }
    if (in.size() > config_.max_positions) {
      throw DataError("decode: prefix of length " + std::to_string(in.size()) + " exceeds max_positions " +
                      std::to_string(config_.max_positions));
    }
    len = std::max(len, in.size());
  }
  for (auto m : memory_rows) {
    if (m < 0 || static_cast<std::size_t>(m) >= enc.batch) throw UsageError("decode: memory row out of range");
  }
  std::vector<TokenId> ids(rows * len, text::kPad);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < inputs[r].size(); ++j) {
      const TokenId id = inputs[r][j];
      if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
        throw DataError("decode: target id " + std::to_string(id) + " outside vocabulary");
      }
      ids[r * len + j] = id;
    }
  }

  // With a single encoded source every row shares it without copying.
  const bool shared = enc.batch == 1;
  const std::size_t src_len = enc.length;
  std::vector<std::uint8_t> cross_mask;
  if (shared) {
    cross_mask = key_padding_mask(enc.key_padding, 1, heads, rows * len, src_len);
  } else {
    std::vector<std::uint8_t> padding(rows * src_len);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(enc.key_padding.data() + static_cast<std::size_t>(memory_rows[r]) * src_len, src_len,
                  padding.data() + r * src_len);
    }
    cross_mask = key_padding_mask(padding, rows, heads, len, src_len);
  }
  const auto self_mask = causal_mask(rows, heads, len);

  auto x = embed(p(tgt_embed_), ids, rows, len, train, rng);
  for (std::size_t l = 0; l < dec_layers_.size(); ++l) {
    const auto& layer = dec_layers_[l];
    auto h = nn::layer_norm(x, p(layer.ln1), p(layer.ln1 + 1));
    auto a = attention(layer.self_attn, h, project(h, layer.self_attn.k), project(h, layer.self_attn.v),
                       self_mask, train, rng);
    if (train && config_.dropout > 0.0) a = nn::dropout(a, config_.dropout, train, *rng);
    x = nn::add(x, a);

    h = nn::layer_norm(x, p(layer.ln2), p(layer.ln2 + 1));
    auto keys = shared ? enc.memory_keys[l] : nn::index_select(enc.memory_keys[l], memory_rows);
    auto values = shared ? enc.memory_values[l] : nn::index_select(enc.memory_values[l], memory_rows);
    auto c = attention(layer.cross_attn, h, keys, values, cross_mask, train, rng);
    if (train && config_.dropout > 0.0) c = nn::dropout(c, config_.dropout, train, *rng);
    x = nn::add(x, c);

    h = nn::layer_norm(x, p(layer.ln3), p(layer.ln3 + 1));
    auto f = feed_forward(h, layer.ffn, train, rng);
    if (train && config_.dropout > 0.0) f = nn::dropout(f, config_.dropout, train, *rng);
    x = nn::add(x, f);
  }
  x = nn::layer_norm(x, p(dec_final_ln_), p(dec_final_ln_ + 1));
  x = nn::scale(x, static_cast<T>(1.0 / std::sqrt(static_cast<double>(config_.d_model))));
  auto logits = config_.tied_embeddings ? nn::matmul(x, p(tgt_embed_), true) : nn::matmul(x, p(output_proj_));
  counters_.decoder_calls += 1;
  counters_.decoder_rows += rows;
  return logits;
}

template <typename T>
nn::Tensor<T> Transformer<T>::decode_logits(std::span<const TokenId> prefix, const EncodedSource<T>& enc) const {
  std::vector<std::vector<TokenId>> one{std::vector<TokenId>(prefix.begin(), prefix.end())};
  const std::int32_t row = 0;
  auto logits = decode(enc, one, std::span<const std::int32_t>(&row, 1));
  return nn::reshape(logits, {prefix.size(), config_.tgt_vocab_size});
}

template <typename T>
std::vector<std::vector<double>> Transformer<T>::next_token_logprobs(
    std::span<const std::vector<TokenId>> prefixes, const EncodedSource<T>& enc) const {
  nn::NoGradGuard no_grad;
  if (prefixes.empty()) return {};
  const std::size_t len = prefixes.front().size();
  for (const auto& pfx : prefixes) {
    if (pfx.size() != len) throw UsageError("next_token_logprobs: prefixes must share one length");
  }
  std::vector<std::int32_t> rows(prefixes.size(), 0);
  auto logits = decode(enc, prefixes, rows);
  const std::size_t vocab = config_.tgt_vocab_size;
  auto data = logits.data();
  std::vector<std::vector<double>> out(prefixes.size(), std::vector<double>(vocab));
  for (std::size_t r = 0; r < prefixes.size(); ++r) {
    const T* row = data.data() + (r * len + len - 1) * vocab;
    double mx = *std::max_element(row, row + vocab);
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < vocab; ++j) out[r][j] = static_cast<double>(row[j]) - lse;
  }
  return out;
}

template <typename T>
std::vector<SequenceScore> Transformer<T>::score_targets(const EncodedSource<T>& enc,
                                                         std::span<const std::vector<TokenId>> targets,
                                                         std::span<const Direction> directions) const {
  nn::NoGradGuard no_grad;
  if (targets.size() != directions.size()) throw UsageError("score_targets: one direction per target");
  if (targets.empty()) return {};
  std::vector<std::vector<TokenId>> inputs, golds;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    inputs.push_back(decoder_input(targets[r], directions[r]));
    golds.push_back(gold_output(targets[r], directions[r]));
  }
  std::vector<std::int32_t> rows(targets.size(), 0);
  auto logprobs = nn::log_softmax(decode(enc, inputs, rows));
  const std::size_t len = logprobs.dim(1), vocab = logprobs.dim(2);
  auto data = logprobs.data();
  std::vector<SequenceScore> out(targets.size());
  for (std::size_t r = 0; r < targets.size(); ++r) {
    for (std::size_t t = 0; t < golds[r].size(); ++t) {
      const double lp = static_cast<double>(data[(r * len + t) * vocab + static_cast<std::size_t>(golds[r][t])]);
      out[r].per_token.push_back(lp);
      out[r].total += lp;
    }
  }
  counters_.teacher_forced_rows += targets.size();
  return out;
}

template <typename T>
SequenceScore Transformer<T>::sequence_logprob(std::span<const TokenId> source, std::span<const TokenId> target,
                                               Direction direction) const {
  nn::NoGradGuard no_grad;
  auto enc = encode(source);
  std::vector<std::vector<TokenId>> one{std::vector<TokenId>(target.begin(), target.end())};
  return score_targets(enc, one, std::span<const Direction>(&direction, 1)).front();
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace bidir::model
