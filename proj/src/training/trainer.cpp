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

#include "bidir/training/trainer.h"

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "bidir/errors.h"
#include "bidir/model/checkpoint.h"
#include "bidir/numeric/ops.h"

namespace bidir::training {

namespace {

constexpr std::uint64_t kDropoutStream = 0x5DEECE66DULL;

std::string join_ids(const std::vector<text::TokenId>& ids) {
  std::string s;
  for (auto id : ids) {
    if (!s.empty()) s += ' ';
    s += std::to_string(id);
  }
  return s;
}

}  // namespace

template <typename T>
BidirectionalLoss<T> bidirectional_loss(const model::Transformer<T>& model, const data::Batch& batch,
                                        const LossOptions& options) {
  if (batch.rows() == 0) throw UsageError("bidirectional_loss: empty batch");
  if (options.train && options.rng == nullptr) throw UsageError("bidirectional_loss: training mode needs an rng");
  auto enc = model.encode(batch.sources, options.train, options.rng);
  auto logits = model.decode(enc, batch.decoder_inputs, batch.source_of_row, options.train, options.rng);
  const std::size_t rows = logits.dim(0), len = logits.dim(1), vocab = logits.dim(2);
  const auto gold = batch.padded_gold_output();
  if (gold.rows != rows || gold.cols != len) throw UsageError("bidirectional_loss: gold and decoder rows differ");

  auto per_token = nn::smoothed_cross_entropy(nn::reshape(logits, {rows * len, vocab}), gold.ids, text::kPad,
                                              options.label_smoothing);
  BidirectionalLoss<T> out;
  const auto values = per_token.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const bool l2r = batch.directions[r] == model::Direction::kL2R;
    for (std::size_t t = 0; t < len; ++t) {
      if (gold.mask[r * len + t]) continue;
      (l2r ? out.sum_l2r : out.sum_r2l) += static_cast<double>(values[r * len + t]);
      ++(l2r ? out.tokens_l2r : out.tokens_r2l);
    }
  }
  out.single_direction = out.tokens_l2r == 0 || out.tokens_r2l == 0;
  out.loss = nn::scale(nn::sum(per_token), static_cast<T>(1.0 / static_cast<double>(out.tokens())));
  return out;
}

template BidirectionalLoss<float> bidirectional_loss(const model::Transformer<float>&, const data::Batch&,
                                                     const LossOptions&);
template BidirectionalLoss<double> bidirectional_loss(const model::Transformer<double>&, const data::Batch&,
                                                      const LossOptions&);

void TrainConfig::validate() const {
  if (max_steps == 0 && max_epochs == 0) throw ConfigError("set max_steps or max_epochs");
  if (warmup < 1) throw ConfigError("warmup must be at least 1");
  if (!(lr_scale > 0.0)) throw ConfigError("lr_scale must be positive");
  if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw ConfigError("label_smoothing must be in [0, 1)");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be positive, or 0 to disable");
  if (token_budget < 2) throw ConfigError("token_budget too small");
  if (checkpoint_interval > 0 && checkpoint_dir.empty()) {
    throw ConfigError("checkpoint_interval needs a checkpoint_dir");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"max_steps", max_steps},
          {"max_epochs", max_epochs},
          {"warmup", warmup},
          {"lr_scale", lr_scale},
          {"label_smoothing", label_smoothing},
          {"clip_norm", clip_norm},
          {"checkpoint_interval", checkpoint_interval},
          {"seed", seed},
          {"token_budget", token_budget},
          {"directions", std::string(data::to_string(directions))},
          {"co_occur", co_occur},
          {"loss_threshold", loss_threshold}};
}

nlohmann::json StepRecord::to_json() const {
  return {{"type", "step"},       {"step", step},
          {"epoch", epoch},       {"loss", loss},
          {"loss_l2r", loss_l2r}, {"loss_r2l", loss_r2l},
          {"tokens", tokens},     {"lr", lr},
          {"grad_norm", grad_norm}, {"tokens_per_sec", tokens_per_sec},
          {"single_direction", single_direction}};
}

nlohmann::json ValidationRecord::to_json() const {
  return {{"type", "validation"}, {"step", step}, {"dev_loss", result.loss}, {"dev_bleu", result.bleu.to_json()}};
}

ValidationResult validate(const model::Transformer<float>& model, const data::Corpus& dev,
                          const inference::DecodeConfig& decode, std::size_t token_budget, inference::Mode mode) {
  if (dev.pairs.empty()) throw UsageError("validate: empty dev corpus");
  nn::NoGradGuard no_grad;
  ValidationResult out;
  data::BatchOptions opts;
  opts.token_budget = token_budget;
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& batch : data::make_batches(dev, opts)) {
    auto l = bidirectional_loss(model, batch);
    total += l.value() * static_cast<double>(l.tokens());
    tokens += l.tokens();
  }
  out.loss = total / static_cast<double>(tokens);

  std::vector<std::string> hyps, refs;
  for (const auto& pair : dev.pairs) {
    auto t = inference::translate(model, pair.source, decode, mode);
    hyps.push_back(join_ids(t.best.tokens));
    refs.push_back(join_ids(model::content_of(pair.target)));
  }
  out.bleu = eval::bleu(std::span<const std::string>(hyps), std::span<const std::string>(refs));
  return out;
}

Trainer::Trainer(model::Transformer<float>& model, TrainConfig config)
    : model_(model),
      config_(std::move(config)),
      params_(model.parameter_tensors()),
      optim_(nn::OptimState::for_parameters(params_)),
      dropout_rng_(config_.seed ^ kDropoutStream) {
  config_.validate();
}

std::filesystem::path Trainer::checkpoint_path(const std::filesystem::path& dir, std::uint64_t step) {
  char name[48];
  std::snprintf(name, sizeof(name), "step_%010llu.ckpt", static_cast<unsigned long long>(step));
  return dir / name;
}

std::optional<std::filesystem::path> Trainer::latest_checkpoint(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) return std::nullopt;
  std::optional<std::filesystem::path> best;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("step_", 0) != 0 || entry.path().extension() != ".ckpt") continue;
    if (!best || name > best->filename().string()) best = entry.path();
  }
  return best;
}

void Trainer::save(const std::filesystem::path& path) const {
  nlohmann::json extra;
  extra["trainer"] = {{"step", optim_.step},
                      {"epoch", epoch_},
                      {"next_batch", next_batch_},
                      {"dropout_rng", dropout_rng_.state()},
                      {"config", config_.to_json()}};
  extra["user"] = checkpoint_extra;
  std::vector<model::TensorRecord> moments;
  const auto& named = model_.parameters();
  for (std::size_t i = 0; i < named.size(); ++i) {
    moments.push_back({"optim.m." + named[i].name, named[i].tensor.shape(), optim_.first_moment[i]});
    moments.push_back({"optim.v." + named[i].name, named[i].tensor.shape(), optim_.second_moment[i]});
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  model::save_model(path, model_, extra, std::move(moments));
}

void Trainer::resume(const std::filesystem::path& checkpoint) {
  const auto file = model::read_checkpoint_file(checkpoint);
  auto restored = model::load_model(file);
  if (nlohmann::json(restored.config()) != nlohmann::json(model_.config())) {
    throw ModelError("checkpoint " + checkpoint.string() + " was written for a different model config");
  }
  std::map<std::string, const model::TensorRecord*> by_name;
  for (const auto& t : file.tensors) by_name[t.name] = &t;
  auto& named = model_.parameters();
  nn::OptimState optim = nn::OptimState::for_parameters(params_);
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto src = restored.parameters()[i].tensor.data();
    std::copy(src.begin(), src.end(), named[i].tensor.mutable_data().begin());
    for (auto [prefix, slot] : {std::pair{"optim.m.", &optim.first_moment}, std::pair{"optim.v.", &optim.second_moment}}) {
      auto it = by_name.find(prefix + named[i].name);
      if (it == by_name.end() || it->second->data.size() != (*slot)[i].size()) {
        throw ModelError("checkpoint " + checkpoint.string() + " lacks optimizer state for " + named[i].name);
      }
      (*slot)[i] = it->second->data;
    }
  }
  try {
    const auto& t = file.header.at("extra").at("trainer");
    optim.step = t.at("step").get<std::uint64_t>();
    epoch_ = t.at("epoch").get<std::uint64_t>();
    next_batch_ = t.at("next_batch").get<std::size_t>();
    dropout_rng_.restore(t.at("dropout_rng").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ModelError("checkpoint " + checkpoint.string() + " has no usable trainer state: " + e.what());
  }
  optim_ = std::move(optim);
}

StepRecord Trainer::train_step(const data::Batch& batch) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t step = optim_.step + 1;
  model_.zero_grad();
  StepRecord rec;
  try {
    auto l = bidirectional_loss(model_, batch, {config_.label_smoothing, true, &dropout_rng_});
    rec.loss = l.value();
    rec.loss_l2r = l.tokens_l2r ? l.sum_l2r / static_cast<double>(l.tokens_l2r) : 0.0;
    rec.loss_r2l = l.tokens_r2l ? l.sum_r2l / static_cast<double>(l.tokens_r2l) : 0.0;
    rec.tokens = l.tokens();
    rec.single_direction = l.single_direction;
    l.loss.backward();
    const double max_norm = config_.clip_norm > 0.0 ? config_.clip_norm : std::numeric_limits<double>::infinity();
    rec.grad_norm = nn::clip_grad_norm(params_, max_norm);
    if (!std::isfinite(rec.grad_norm)) throw NumericError("gradient norm is not finite");
  } catch (const NumericError& e) {
    throw NumericError("training diverged at step " + std::to_string(step) + ": " + e.what());
  }
  rec.lr = config_.lr_scale * nn::lr_schedule(step, model_.config().d_model, config_.warmup);
  nn::adam_step(params_, optim_, rec.lr);
  rec.step = optim_.step;
  rec.epoch = epoch_;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  rec.tokens_per_sec = secs > 0.0 ? static_cast<double>(rec.tokens) / secs : 0.0;
  return rec;
}

TrainReport Trainer::run(const data::Corpus& corpus, const data::Corpus* dev, std::ostream* report) {
  if (corpus.pairs.empty()) throw DataError("training corpus is empty");
  TrainReport out;
  auto emit = [&](const nlohmann::json& j) {
    if (report) *report << j.dump() << '\n' << std::flush;
  };
  std::uint64_t last_saved = std::numeric_limits<std::uint64_t>::max();
  auto checkpoint = [&] {
    if (config_.checkpoint_dir.empty()) return;
    save(checkpoint_path(config_.checkpoint_dir, optim_.step));
    last_saved = optim_.step;
    if (dev) {
      ValidationRecord v{optim_.step, validate(model_, *dev, validation_decode, config_.token_budget)};
      emit(v.to_json());
      out.validations.push_back(v);
    }
  };
  bool stopped = false;
  auto done = [&] {
    return stopped || (config_.max_steps > 0 && optim_.step >= config_.max_steps) ||
           (config_.max_epochs > 0 && epoch_ >= config_.max_epochs);
  };

  data::BatchOptions opts;
  opts.token_budget = config_.token_budget;
  opts.seed = config_.seed;
  opts.directions = config_.directions;
  opts.co_occur = config_.co_occur;
  while (!done()) {
    opts.epoch = epoch_;
    const auto batches = data::make_batches(corpus, opts);
    while (next_batch_ < batches.size() && !done()) {
      auto rec = train_step(batches[next_batch_]);
      ++next_batch_;
      if (next_batch_ == batches.size()) {
        next_batch_ = 0;
        ++epoch_;
      }
      if (config_.loss_threshold > 0.0 && !out.steps_to_threshold && rec.loss <= config_.loss_threshold) {
        out.steps_to_threshold = rec.step;
      }
      emit(rec.to_json());
      if (on_step) on_step(rec);
      out.steps.push_back(rec);
      if (stop_when && stop_when(rec)) stopped = true;
      if (config_.checkpoint_interval > 0 && optim_.step % config_.checkpoint_interval == 0) checkpoint();
      if (next_batch_ == 0) break;
    }
  }
  if (last_saved != optim_.step) checkpoint();
  if (out.steps_to_threshold) emit({{"type", "threshold"}, {"steps_to_threshold", *out.steps_to_threshold}});
  return out;
}

TrainReport train(model::Transformer<float>& model, const data::Corpus& corpus, const TrainConfig& config,
                  const data::Corpus* dev, std::ostream* report) {
  Trainer trainer(model, config);
  return trainer.run(corpus, dev, report);
}

}  // namespace bidir::training
