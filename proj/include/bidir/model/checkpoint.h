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

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bidir/model/transformer.h"
#include "bidir/numeric/tensor.h"

namespace bidir::model {

// On-disk layout:
//   uint64 little-endian header length N
//   N bytes of UTF-8 JSON header
//   raw little-endian float32 payloads, in manifest order
// The header carries "config", "vocab_sizes", the tensor manifest (name,
// shape, byte offset relative to the payload start, byte count), a payload
// checksum, and a free-form "extra" object for training state.
struct TensorRecord {
  std::string name;
  nn::Shape shape;
  std::vector<float> data;
};

struct CheckpointFile {
  nlohmann::json header;
  std::vector<TensorRecord> tensors;
};

// Writes to a temporary sibling and renames it into place.
void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file);
// ModelError on any truncation, checksum or manifest inconsistency.
CheckpointFile read_checkpoint_file(const std::filesystem::path& path);

// Model weights plus optional extra tensors (e.g. optimizer moments).
void save_model(const std::filesystem::path& path, const Transformer<float>& model,
                const nlohmann::json& extra = nlohmann::json::object(),
                std::vector<TensorRecord> extra_tensors = {});

// Rebuilds the model from a checkpoint, validating every tensor's shape
// against the stored config. ModelError on mismatch.
Transformer<float> load_model(const CheckpointFile& file);
Transformer<float> load_model(const std::filesystem::path& path);

}  // namespace bidir::model
