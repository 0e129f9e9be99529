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

#include "bidir/model/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <algorithm>
#include <map>

#include "bidir/errors.h"

namespace bidir::model {

namespace {

constexpr std::string_view kFormat = "bidirnmt-checkpoint";
constexpr int kVersion = 1;

std::uint64_t fnv1a(std::uint64_t h, const char* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename U>
U to_little(U v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    std::reverse(b, b + sizeof(U));
    std::memcpy(&v, b, sizeof(U));
    return v;
  }
}

std::string encode_floats(const std::vector<float>& data) {
  std::string out(data.size() * sizeof(float), '\0');
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(data[i]));
    std::memcpy(out.data() + i * sizeof(float), &bits, sizeof(bits));
  }
  return out;
}

std::vector<float> decode_floats(const char* bytes, std::size_t count) {
  std::vector<float> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes + i * sizeof(float), sizeof(bits));
    out[i] = std::bit_cast<float>(to_little(bits));
  }
  return out;
}

}  // namespace

void write_checkpoint_file(const std::filesystem::path& path, const CheckpointFile& file) {
  nlohmann::json header = file.header;
  header["format"] = kFormat;
  header["version"] = kVersion;
  nlohmann::json manifest = nlohmann::json::array();
  std::string payload;
  for (const auto& t : file.tensors) {
    if (nn::shape_numel(t.shape) != t.data.size()) {
      throw ModelError("checkpoint tensor '" + t.name + "' does not match its shape");
    }
    auto bytes = encode_floats(t.data);
    manifest.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", payload.size()}, {"nbytes", bytes.size()}});
    payload += bytes;
  }
  header["tensors"] = std::move(manifest);
  header["payload_bytes"] = payload.size();
  header["payload_fnv1a"] = fnv1a(14695981039346656037ULL, payload.data(), payload.size());
  const std::string text = header.dump();

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ModelError("cannot write checkpoint " + tmp.string());
    const std::uint64_t n = to_little<std::uint64_t>(text.size());
    out.write(reinterpret_cast<const char*>(&n), sizeof(n));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw ModelError("short write to checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint " + path.string());
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto corrupt = [&](const std::string& why) { return ModelError("corrupt checkpoint " + path.string() + ": " + why); };
  if (blob.size() < sizeof(std::uint64_t)) throw corrupt("truncated header length");
  std::uint64_t n;
  std::memcpy(&n, blob.data(), sizeof(n));
  n = to_little(n);
  if (n > blob.size() - sizeof(n)) throw corrupt("header length exceeds file size");

  CheckpointFile file;
  try {
    file.header = nlohmann::json::parse(blob.substr(sizeof(n), n));
  } catch (const nlohmann::json::exception& e) {
    throw corrupt(std::string("unparsable header: ") + e.what());
  }
  const char* payload = blob.data() + sizeof(n) + n;
  const std::size_t payload_size = blob.size() - sizeof(n) - n;
  try {
    if (file.header.at("format") != kFormat) throw corrupt("unknown format tag");
    if (file.header.at("version").get<int>() != kVersion) throw corrupt("unsupported version");
    if (file.header.at("payload_bytes").get<std::size_t>() != payload_size) throw corrupt("payload size mismatch");
    if (file.header.at("payload_fnv1a").get<std::uint64_t>() !=
        fnv1a(14695981039346656037ULL, payload, payload_size)) {
      throw corrupt("payload checksum mismatch");
    }
    for (const auto& entry : file.header.at("tensors")) {
      TensorRecord t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<nn::Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto nbytes = entry.at("nbytes").get<std::size_t>();
      if (nbytes != nn::shape_numel(t.shape) * sizeof(float) || offset + nbytes > payload_size) {
        throw corrupt("tensor '" + t.name + "' has an inconsistent manifest entry");
      }
      t.data = decode_floats(payload + offset, nn::shape_numel(t.shape));
      file.tensors.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw corrupt(std::string("malformed header: ") + e.what());
  }
  return file;
}

void save_model(const std::filesystem::path& path, const Transformer<float>& model, const nlohmann::json& extra,
                std::vector<TensorRecord> extra_tensors) {
  CheckpointFile file;
  file.header["config"] = model.config();
  file.header["vocab_sizes"] = {{"source", model.config().src_vocab_size},
                                {"target", model.config().tgt_vocab_size}};
  file.header["num_model_tensors"] = model.parameters().size();
  file.header["extra"] = extra;
  for (const auto& np : model.parameters()) {
    file.tensors.push_back({np.name, np.tensor.shape(), {np.tensor.data().begin(), np.tensor.data().end()}});
  }
  for (auto& t : extra_tensors) file.tensors.push_back(std::move(t));
  write_checkpoint_file(path, file);
}

Transformer<float> load_model(const CheckpointFile& file) {
  ModelConfig config;
  try {
    config = file.header.at("config").get<ModelConfig>();
    const auto& sizes = file.header.at("vocab_sizes");
    if (sizes.at("source").get<std::size_t>() != config.src_vocab_size ||
        sizes.at("target").get<std::size_t>() != config.tgt_vocab_size) {
      throw ModelError("checkpoint vocabulary sizes disagree with its config");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("checkpoint config unreadable: ") + e.what());
  }
  Transformer<float> model = [&] {
    try {
      return Transformer<float>(config);
    } catch (const ConfigError& e) {
      throw ModelError(std::string("checkpoint config invalid: ") + e.what());
    }
  }();
  std::map<std::string, const TensorRecord*> by_name;
  for (const auto& t : file.tensors) by_name[t.name] = &t;
  for (auto& np : model.parameters()) {
    auto it = by_name.find(np.name);
    if (it == by_name.end()) throw ModelError("checkpoint lacks tensor '" + np.name + "'");
    if (it->second->shape != np.tensor.shape()) {
      throw ModelError("checkpoint tensor '" + np.name + "' has shape " + nn::shape_to_string(it->second->shape) +
                       ", config expects " + nn::shape_to_string(np.tensor.shape()));
    }
    std::copy(it->second->data.begin(), it->second->data.end(), np.tensor.mutable_data().begin());
  }
  return model;
}

Transformer<float> load_model(const std::filesystem::path& path) { return load_model(read_checkpoint_file(path)); }

}  // namespace bidir::model
