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

#include "bidir/cli/run_config.h"

#include <charconv>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "bidir/errors.h"

namespace bidir::cli {

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
  T out{};
  std::string s(v);
  try {
    std::size_t used = 0;
    if constexpr (std::is_floating_point_v<T>) {
      if (s == "-inf") return -std::numeric_limits<T>::infinity();
      out = static_cast<T>(std::stod(s, &used));
    } else {
      if (!s.empty() && s.front() == '-') throw std::invalid_argument("negative");
      out = static_cast<T>(std::stoull(s, &used));
    }
    if (used != s.size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw ConfigError("bad value '" + s + "' for " + std::string(key));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("bad boolean '" + std::string(v) + "' for " + std::string(key));
}

std::string format_double(double v) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view key, std::string_view)> set;
};

template <typename T>
Field make_field(std::function<T&(RunConfig&)> ref) {
  Field f;
  f.get = [ref](const RunConfig& c) {
    auto& v = ref(const_cast<RunConfig&>(c));
    if constexpr (std::is_same_v<T, bool>) {
      return std::string(v ? "true" : "false");
    } else if constexpr (std::is_floating_point_v<T>) {
      return format_double(v);
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      return v.string();
    } else {
      return std::to_string(v);
    }
  };
  f.set = [ref](RunConfig& c, std::string_view key, std::string_view v) {
    if constexpr (std::is_same_v<T, bool>) {
      ref(c) = parse_bool(key, v);
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      ref(c) = std::filesystem::path(std::string(v));
    } else {
      ref(c) = parse_number<T>(key, v);
    }
  };
  return f;
}

template <typename T>
Field field(T& (*ref)(RunConfig&)) {
  return make_field<T>(ref);
}

#define BIDIR_FIELD(member) field(+[](RunConfig& c) -> auto& { return c.member; })

const std::map<std::string, Field, std::less<>>& table() {
  static const std::map<std::string, Field, std::less<>> t = [] {
    std::map<std::string, Field, std::less<>> m;
    m["data.train_source"] = BIDIR_FIELD(data.train_source);
    m["data.train_target"] = BIDIR_FIELD(data.train_target);
    m["data.dev_source"] = BIDIR_FIELD(data.dev_source);
    m["data.dev_target"] = BIDIR_FIELD(data.dev_target);
    m["data.source_vocab"] = BIDIR_FIELD(data.source_vocab);
    m["data.target_vocab"] = BIDIR_FIELD(data.target_vocab);
    m["data.source_merges"] = BIDIR_FIELD(data.source_merges);
    m["data.target_merges"] = BIDIR_FIELD(data.target_merges);
    m["data.lowercase"] = BIDIR_FIELD(data.lowercase);
    m["data.max_len"] = BIDIR_FIELD(data.max_len);

    m["model.num_encoder_layers"] = BIDIR_FIELD(model.num_encoder_layers);
    m["model.num_decoder_layers"] = BIDIR_FIELD(model.num_decoder_layers);
    m["model.d_model"] = BIDIR_FIELD(model.d_model);
    m["model.num_heads"] = BIDIR_FIELD(model.num_heads);
    m["model.d_ff"] = BIDIR_FIELD(model.d_ff);
    m["model.dropout"] = BIDIR_FIELD(model.dropout);
    m["model.max_positions"] = BIDIR_FIELD(model.max_positions);
    m["model.tied_embeddings"] = BIDIR_FIELD(model.tied_embeddings);

    m["train.max_steps"] = BIDIR_FIELD(train.max_steps);
    m["train.max_epochs"] = BIDIR_FIELD(train.max_epochs);
    m["train.warmup"] = BIDIR_FIELD(train.warmup);
    m["train.lr_scale"] = BIDIR_FIELD(train.lr_scale);
    m["train.label_smoothing"] = BIDIR_FIELD(train.label_smoothing);
    m["train.clip_norm"] = BIDIR_FIELD(train.clip_norm);
    m["train.checkpoint_interval"] = BIDIR_FIELD(train.checkpoint_interval);
    m["train.token_budget"] = BIDIR_FIELD(train.token_budget);
    m["train.co_occur"] = BIDIR_FIELD(train.co_occur);
    m["train.loss_threshold"] = BIDIR_FIELD(train.loss_threshold);
    m["train.directions"] = Field{
        [](const RunConfig& c) { return std::string(data::to_string(c.train.directions)); },
        [](RunConfig& c, std::string_view key, std::string_view v) {
          try {
            c.train.directions = data::parse_direction_mode(v);
          } catch (const UsageError& e) {
            throw ConfigError(std::string(key) + ": " + e.what());
          }
        }};

    m["decode.beam"] = BIDIR_FIELD(decode.beam);
    m["decode.alpha"] = BIDIR_FIELD(decode.alpha);
    m["decode.max_len"] = BIDIR_FIELD(decode.max_len);
    m["decode.normalize_combined"] = BIDIR_FIELD(decode.normalize_combined);
    m["decode.unfinished_penalty"] = BIDIR_FIELD(decode.unfinished_penalty);
    m["decode.tie_break"] = Field{
        [](const RunConfig& c) { return std::string(inference::to_string(c.decode.tie_break)); },
        [](RunConfig& c, std::string_view key, std::string_view v) {
          try {
            c.decode.tie_break = inference::parse_tie_break(v);
          } catch (const UsageError& e) {
            throw ConfigError(std::string(key) + ": " + e.what());
          }
        }};
    m["decode.mode"] = Field{[](const RunConfig& c) { return std::string(inference::to_string(c.mode)); },
                             [](RunConfig& c, std::string_view key, std::string_view v) {
                               try {
                                 c.mode = inference::parse_mode(v);
                               } catch (const UsageError& e) {
                                 throw ConfigError(std::string(key) + ": " + e.what());
                               }
                             }};

    m["run.dir"] = BIDIR_FIELD(run_dir);
    m["run.seed"] = BIDIR_FIELD(seed);
    return m;
  }();
  return t;
}

#undef BIDIR_FIELD

const std::vector<std::string> kPathKeys{"data.train_source",  "data.train_target",  "data.dev_source",
                                         "data.dev_target",    "data.source_vocab",  "data.target_vocab",
                                         "data.source_merges", "data.target_merges", "run.dir"};

}  // namespace

RunConfig::RunConfig() {
  model = model::ModelConfig::small(0, 0);
  train.max_steps = 10000;
  train.checkpoint_interval = 1000;
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& [name, _] : table()) out.push_back(name);
    return out;
  }();
  return k;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  auto it = table().find(key);
  if (it == table().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second.set(*this, key, value);
}

std::string RunConfig::get(std::string_view key) const {
  auto it = table().find(key);
  if (it == table().end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second.get(*this);
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    if (!std::filesystem::exists(path)) throw DataError("config file not found: " + path.string());
    throw ConfigError("cannot parse " + path.string() + ": " + e.message());
  }
  RunConfig c;
  const auto base = std::filesystem::absolute(path).parent_path();
  for (const auto& [section, entries] : tree) {
    if (entries.empty()) throw ConfigError("config key '" + section + "' is outside any section");
    for (const auto& [name, value] : entries) {
      const std::string key = section + "." + name;
      std::string v = value.get_value<std::string>();
      const bool is_path = std::find(kPathKeys.begin(), kPathKeys.end(), key) != kPathKeys.end();
      if (is_path && !v.empty() && std::filesystem::path(v).is_relative()) v = (base / v).lexically_normal().string();
      c.set(key, v);
    }
  }
  return c;
}

void RunConfig::validate() const {
  if (data.max_len < 2) throw ConfigError("data.max_len must be at least 2");
  if (data.max_len > model.max_positions) {
    throw ConfigError("data.max_len exceeds model.max_positions");
  }
  auto m = model;
  m.src_vocab_size = std::max<std::size_t>(m.src_vocab_size, text::kNumSpecial + 1);
  m.tgt_vocab_size = std::max<std::size_t>(m.tgt_vocab_size, text::kNumSpecial + 1);
  m.validate();
  auto t = train;
  t.checkpoint_dir = run_dir / "checkpoints";
  t.validate();
  decode.validate();
}

std::string RunConfig::to_ini() const {
  boost::property_tree::ptree tree;
  for (const auto& key : keys()) tree.put(boost::property_tree::ptree::path_type(key, '.'), get(key));
  std::ostringstream out;
  boost::property_tree::ini_parser::write_ini(out, tree);
  return out.str();
}

}  // namespace bidir::cli
