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

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bidir/inference/decoder.h"
#include "bidir/model/config.h"
#include "bidir/training/trainer.h"

namespace bidir::cli {

struct DataConfig {
  std::filesystem::path train_source, train_target;
  std::filesystem::path dev_source, dev_target;
  std::filesystem::path source_vocab, target_vocab;
  std::filesystem::path source_merges, target_merges;  // empty: input already segmented
  bool lowercase = false;
  std::size_t max_len = 256;
};

// Everything a run needs, merged from an INI file ("[section] key = value")
// and "section.key=value" overrides. Keys outside the known set are rejected.
struct RunConfig {
  DataConfig data;
  model::ModelConfig model;  // vocab sizes come from the vocabularies
  training::TrainConfig train;
  inference::DecodeConfig decode;
  inference::Mode mode = inference::Mode::kBidirectional;
  std::filesystem::path run_dir = "run";
  std::uint64_t seed = 1;

  RunConfig();

  // DataError if the file cannot be read; ConfigError on unknown keys or
  // unparsable values. Relative paths resolve against the file's directory.
  static RunConfig load(const std::filesystem::path& path);

  // key is "section.name".
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();

  // ConfigError when any module config is out of range.
  void validate() const;

  std::string to_ini() const;
};

}  // namespace bidir::cli
