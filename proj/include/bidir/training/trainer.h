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
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include <nlohmann/json.hpp>

#include "bidir/data/corpus.h"
#include "bidir/evaluation/metrics.h"
#include "bidir/inference/decoder.h"
#include "bidir/model/transformer.h"
#include "bidir/numeric/optim.h"

namespace bidir::training {

struct LossOptions {
  double label_smoothing = 0.0;
  bool train = false;  // dropout on; needs rng
  nn::Rng* rng = nullptr;
};

template <typename T>
struct BidirectionalLoss {
  nn::Tensor<T> loss;  // scalar: mean over non-pad gold tokens of every row
  double sum_l2r = 0.0;  // summed per-token loss of L2R rows
  double sum_r2l = 0.0;
  std::size_t tokens_l2r = 0;
  std::size_t tokens_r2l = 0;
  bool single_direction = false;

  std::size_t tokens() const { return tokens_l2r + tokens_r2l; }
  double value() const { return static_cast<double>(loss.item()); }
};

template <typename T>
BidirectionalLoss<T> bidirectional_loss(const model::Transformer<T>& model, const data::Batch& batch,
                                        const LossOptions& options = {});

struct TrainConfig {
  std::uint64_t max_steps = 0;   // 0: bounded by max_epochs only
  std::uint64_t max_epochs = 0;  // 0: bounded by max_steps only
  std::uint64_t warmup = 4000;
  double lr_scale = 1.0;  // multiplies the schedule
  double label_smoothing = 0.1;
  double clip_norm = 1.0;  // 0 disables clipping
  std::uint64_t checkpoint_interval = 0;  // 0: only a final checkpoint
  std::uint64_t seed = 1;
  std::size_t token_budget = 4096;
  data::DirectionMode directions = data::DirectionMode::kBoth;
  bool co_occur = true;
  double loss_threshold = 0.0;  // > 0 records the first step at or below it
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints

  void validate() const;
  nlohmann::json to_json() const;
};

struct StepRecord {
  std::uint64_t step = 0;  // 1-based count of updates done
  std::uint64_t epoch = 0;
  double loss = 0.0;
  double loss_l2r = 0.0;  // per-token mean of each direction's rows
  double loss_r2l = 0.0;
  std::size_t tokens = 0;
  double lr = 0.0;
  double grad_norm = 0.0;
  double tokens_per_sec = 0.0;
  bool single_direction = false;

  nlohmann::json to_json() const;
};

struct ValidationResult {
  double loss = 0.0;
  eval::BleuReport bleu;
};

struct ValidationRecord {
  std::uint64_t step = 0;
  ValidationResult result;

  nlohmann::json to_json() const;
};

struct TrainReport {
  std::vector<StepRecord> steps;
  std::vector<ValidationRecord> validations;
  std::optional<std::uint64_t> steps_to_threshold;
};

// Dev loss (no smoothing, token-weighted over all dev batches) and BLEU of
// translations compared as id streams.
ValidationResult validate(const model::Transformer<float>& model, const data::Corpus& dev,
                          const inference::DecodeConfig& decode, std::size_t token_budget = 4096,
                          inference::Mode mode = inference::Mode::kBidirectional);

// Owns the optimization state around a model. Training is deterministic for a
// given seed; checkpoints hold everything needed to continue bit-for-bit.
class Trainer {
 public:
  Trainer(model::Transformer<float>& model, TrainConfig config);

  // Restores model, optimizer and position from a checkpoint written by a
  // trainer with the same model config. ModelError otherwise.
  void resume(const std::filesystem::path& checkpoint);

  // Trains until max_steps or max_epochs. With a dev corpus, validation runs
  // at every checkpoint. Records go to `report` as JSON lines.
  TrainReport run(const data::Corpus& corpus, const data::Corpus* dev = nullptr, std::ostream* report = nullptr);

  void save(const std::filesystem::path& path) const;

  std::uint64_t step() const { return optim_.step; }
  std::uint64_t epoch() const { return epoch_; }
  const TrainConfig& config() const { return config_; }

  // Stored under "user" in every checkpoint.
  nlohmann::json checkpoint_extra = nlohmann::json::object();
  inference::DecodeConfig validation_decode;
  std::function<void(const StepRecord&)> on_step;
  // Checked after every step; true ends the run early.
  std::function<bool(const StepRecord&)> stop_when;

  static std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t step);
  // Highest-step checkpoint in dir, if any.
  static std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& dir);

 private:
  StepRecord train_step(const data::Batch& batch);

  model::Transformer<float>& model_;
  TrainConfig config_;
  std::vector<nn::Tensor<float>> params_;
  nn::OptimState optim_;
  nn::Rng dropout_rng_;
  std::uint64_t epoch_ = 0;
  std::size_t next_batch_ = 0;
};

TrainReport train(model::Transformer<float>& model, const data::Corpus& corpus, const TrainConfig& config,
                  const data::Corpus* dev = nullptr, std::ostream* report = nullptr);

}  // namespace bidir::training
