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

#include <cstddef>

#include <nlohmann/json.hpp>

namespace bidir::model {

struct ModelConfig {
  std::size_t num_encoder_layers = 2;
  std::size_t num_decoder_layers = 2;
  std::size_t d_model = 256;
  std::size_t num_heads = 4;
  std::size_t d_ff = 1024;
  double dropout = 0.1;
  // Decoder position 0 holds the direction start token.
  std::size_t max_positions = 256;
  bool tied_embeddings = true;
  std::size_t src_vocab_size = 0;
  std::size_t tgt_vocab_size = 0;

  // 2+2 layers, 256-dimensional, 4 heads, 1024 feed-forward.
  static ModelConfig small(std::size_t src_vocab, std::size_t tgt_vocab);
  // 6+6 layers, 1024-dimensional, 16 heads, 4096 feed-forward.
  static ModelConfig big(std::size_t src_vocab, std::size_t tgt_vocab);

  // ConfigError when any field is out of range.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace bidir::model
