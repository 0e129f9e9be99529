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

#include "bidir/model/config.h"

#include <string>

#include "bidir/errors.h"

namespace bidir::model {

ModelConfig ModelConfig::small(std::size_t src_vocab, std::size_t tgt_vocab) {
  ModelConfig c;
  c.src_vocab_size = src_vocab;
  c.tgt_vocab_size = tgt_vocab;
  return c;
}

ModelConfig ModelConfig::big(std::size_t src_vocab, std::size_t tgt_vocab) {
  ModelConfig c;
  c.num_encoder_layers = 6;
  c.num_decoder_layers = 6;
  c.d_model = 1024;
  c.num_heads = 16;
  c.d_ff = 4096;
  c.dropout = 0.3;
  c.src_vocab_size = src_vocab;
  c.tgt_vocab_size = tgt_vocab;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (num_encoder_layers == 0 || num_decoder_layers == 0) fail("layer counts must be positive");
  if (d_model == 0 || num_heads == 0 || d_ff == 0) fail("d_model, num_heads and d_ff must be positive");
  if (d_model % num_heads != 0) {
    fail("d_model " + std::to_string(d_model) + " is not divisible by num_heads " + std::to_string(num_heads));
  }
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must lie in [0, 1)");
  if (max_positions < 2) fail("max_positions must be at least 2");
  if (src_vocab_size <= 5 || tgt_vocab_size <= 5) fail("vocabularies must extend past the five special tokens");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"num_encoder_layers", c.num_encoder_layers},
                     {"num_decoder_layers", c.num_decoder_layers},
                     {"d_model", c.d_model},
                     {"num_heads", c.num_heads},
                     {"d_ff", c.d_ff},
                     {"dropout", c.dropout},
                     {"max_positions", c.max_positions},
                     {"tied_embeddings", c.tied_embeddings},
                     {"src_vocab_size", c.src_vocab_size},
                     {"tgt_vocab_size", c.tgt_vocab_size}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("num_encoder_layers").get_to(c.num_encoder_layers);
  j.at("num_decoder_layers").get_to(c.num_decoder_layers);
  j.at("d_model").get_to(c.d_model);
  j.at("num_heads").get_to(c.num_heads);
  j.at("d_ff").get_to(c.d_ff);
  j.at("dropout").get_to(c.dropout);
  j.at("max_positions").get_to(c.max_positions);
  j.at("tied_embeddings").get_to(c.tied_embeddings);
  j.at("src_vocab_size").get_to(c.src_vocab_size);
  j.at("tgt_vocab_size").get_to(c.tgt_vocab_size);
}

}  // namespace bidir::model
