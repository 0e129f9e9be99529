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

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bidir/model/config.h"
#include "bidir/model/direction.h"
#include "bidir/numeric/random.h"
#include "bidir/numeric/tensor.h"
#include "bidir/tokenizer/vocab.h"

namespace bidir::model {

using text::TokenId;

// Encoder output for a batch of sources, padded to a common length.
template <typename T>
struct EncodedSource {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<std::size_t> lengths;
  nn::Tensor<T> hidden;                    // [batch, length, d_model]
  std::vector<std::uint8_t> key_padding;   // [batch * length], 1 marks padding
  // Cross-attention keys and values of every decoder layer, projected once
  // per source so repeated decoder calls never touch the encoder again.
  std::vector<nn::Tensor<T>> memory_keys;
  std::vector<nn::Tensor<T>> memory_values;
};

struct SequenceScore {
  double total = 0.0;
  std::vector<double> per_token;  // generation order, EOS last
};

// Forward-pass instrumentation. Copies start from zero.
class ForwardCounters {
 public:
  ForwardCounters() = default;
  ForwardCounters(const ForwardCounters&) {}
  ForwardCounters& operator=(const ForwardCounters&) { return *this; }

  void reset();

  std::atomic<std::uint64_t> encoded_sources{0};
  std::atomic<std::uint64_t> decoder_calls{0};
  std::atomic<std::uint64_t> decoder_rows{0};
  std::atomic<std::uint64_t> teacher_forced_rows{0};
};

template <typename T>
struct NamedParameter {
  std::string name;
  nn::Tensor<T> tensor;
};

// Transformer encoder-decoder. One parameter set serves both decoding
// directions; the direction is carried only by the first decoder input token.
// Layers are pre-norm with a final layer norm on each stack.
template <typename T>
class Transformer {
 public:
  // All weights zero except layer-norm gains (one).
  explicit Transformer(ModelConfig config);

  // Truncated-normal embeddings with std d_model^-0.5, Xavier-uniform
  // projections, zero biases. Values are drawn in double precision so float
  // and double models built from the same seed agree.
  static Transformer initialized(ModelConfig config, nn::Rng& rng);

  template <typename U>
  Transformer<U> cast() const;

  const ModelConfig& config() const { return config_; }

  std::vector<NamedParameter<T>>& parameters() { return params_; }
  const std::vector<NamedParameter<T>>& parameters() const { return params_; }
  std::vector<nn::Tensor<T>> parameter_tensors() const;
  std::size_t parameter_count() const;
  // ConfigError if no parameter has that name.
  const nn::Tensor<T>& parameter(std::string_view name) const;
  nn::Tensor<T>& parameter(std::string_view name);

  void zero_grad();

  // Encodes a batch of sources (EOS included by the caller if wanted).
  EncodedSource<T> encode(std::span<const std::vector<TokenId>> sources, bool train = false,
                          nn::Rng* rng = nullptr) const;
  EncodedSource<T> encode(std::span<const TokenId> source) const;

  // Teacher-forced decoder pass. Row r of `inputs` must start with a
  // direction start token and attends to encoded source memory_rows[r].
  // Rows are right-padded; returns logits [rows, max_len, tgt_vocab].
  nn::Tensor<T> decode(const EncodedSource<T>& enc, std::span<const std::vector<TokenId>> inputs,
                       std::span<const std::int32_t> memory_rows, bool train = false,
                       nn::Rng* rng = nullptr) const;

  // Logits [prefix.size(), tgt_vocab] for one prefix against source 0 of enc.
  // Position t depends only on prefix[0..t].
  nn::Tensor<T> decode_logits(std::span<const TokenId> prefix, const EncodedSource<T>& enc) const;

  // Next-token log-probabilities for equal-length prefixes sharing source 0:
  // one row of tgt_vocab values per prefix.
  std::vector<std::vector<double>> next_token_logprobs(std::span<const std::vector<TokenId>> prefixes,
                                                       const EncodedSource<T>& enc) const;

  // Teacher-forced log-probability of each target (natural order, EOS
  // optional and implied) under its direction, all against source 0 of enc,
  // in one batched decoder pass.
  std::vector<SequenceScore> score_targets(const EncodedSource<T>& enc,
                                           std::span<const std::vector<TokenId>> targets,
                                           std::span<const Direction> directions) const;

  SequenceScore sequence_logprob(std::span<const TokenId> source, std::span<const TokenId> target,
                                 Direction direction) const;

  ForwardCounters& counters() const { return counters_; }

 private:
  struct AttentionWeights {
    std::size_t q, k, v, o;  // indices of weight tensors; bias follows each
  };

  std::size_t add_param(std::string name, nn::Shape shape, T fill = T(0));
  void build();
  const nn::Tensor<T>& p(std::size_t index) const { return params_[index].tensor; }

  nn::Tensor<T> embed(const nn::Tensor<T>& table, std::span<const TokenId> ids, std::size_t rows,
                      std::size_t len, bool train, nn::Rng* rng) const;
  // Multi-head attention of query_in [b, t, d] over already projected keys
  // and values [bk, s, d]. When bk == 1 and b > 1 every query row shares the
  // single memory. mask has one byte per score, 1 = blocked.
  nn::Tensor<T> attention(const AttentionWeights& w, const nn::Tensor<T>& query_in, const nn::Tensor<T>& keys,
                          const nn::Tensor<T>& values, std::span<const std::uint8_t> mask, bool train,
                          nn::Rng* rng) const;
  nn::Tensor<T> feed_forward(const nn::Tensor<T>& x, std::size_t w1, bool train, nn::Rng* rng) const;
  nn::Tensor<T> project(const nn::Tensor<T>& x, std::size_t weight) const;

  ModelConfig config_;
  std::vector<NamedParameter<T>> params_;
  std::vector<T> positional_;  // [max_positions, d_model]

  std::size_t src_embed_ = 0, tgt_embed_ = 0, output_proj_ = 0;
  std::size_t enc_final_ln_ = 0, dec_final_ln_ = 0;
  struct EncoderLayer {
    std::size_t ln1, ln2, ffn;
    AttentionWeights self_attn;
  };
  struct DecoderLayer {
    std::size_t ln1, ln2, ln3, ffn;
    AttentionWeights self_attn, cross_attn;
  };
  std::vector<EncoderLayer> enc_layers_;
  std::vector<DecoderLayer> dec_layers_;

  mutable ForwardCounters counters_;
};

extern template class Transformer<float>;
extern template class Transformer<double>;

template <typename T>
template <typename U>
Transformer<U> Transformer<T>::cast() const {
  Transformer<U> out(config_);
  auto& dst = out.parameters();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto src = params_[i].tensor.data();
    auto d = dst[i].tensor.mutable_data();
    for (std::size_t j = 0; j < src.size(); ++j) d[j] = static_cast<U>(src[j]);
  }
  return out;
}

}  // namespace bidir::model
