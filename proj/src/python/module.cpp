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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "bidir/cli/commands.h"
#include "bidir/errors.h"
#include "bidir/evaluation/metrics.h"
#include "bidir/inference/decoder.h"
#include "bidir/model/checkpoint.h"
#include "bidir/tokenizer/bpe.h"
#include "bidir/tokenizer/vocab.h"

namespace py = pybind11;
using namespace bidir;
using text::TokenId;

namespace {

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_python(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

py::dict hypothesis_dict(const inference::Hypothesis& h) {
  py::dict d;
  d["tokens"] = h.tokens;
  d["origin"] = std::string(model::to_string(h.origin));
  d["logprob_l2r"] = h.logprob_l2r ? py::cast(*h.logprob_l2r) : py::none();
  d["logprob_r2l"] = h.logprob_r2l ? py::cast(*h.logprob_r2l) : py::none();
  d["finished"] = h.finished;
  d["found_by_both"] = h.found_by_both;
  return d;
}

inference::DecodeConfig decode_config(std::size_t beam, double alpha, std::size_t max_len,
                                      const std::string& tie_break) {
  inference::DecodeConfig c;
  c.beam = beam;
  c.alpha = alpha;
  c.max_len = max_len;
  c.tie_break = inference::parse_tie_break(tie_break);
  c.validate();
  return c;
}

std::vector<TokenId> with_eos(std::vector<TokenId> ids) {
  if (ids.empty() || ids.back() != text::kEos) ids.push_back(text::kEos);
  return ids;
}

// Float model handle for Python.
class Model {
 public:
  explicit Model(model::Transformer<float> m) : m_(std::move(m)) {}

  static Model initialized(const py::object& config, std::uint64_t seed) {
    auto c = from_python(config).get<model::ModelConfig>();
    c.validate();
    nn::Rng rng(seed);
    return Model(model::Transformer<float>::initialized(c, rng));
  }
  static Model load(const std::filesystem::path& path) { return Model(model::load_model(path)); }
  void save(const std::filesystem::path& path) const { model::save_model(path, m_); }

  py::object config() const { return to_python(nlohmann::json(m_.config())); }
  std::size_t parameter_count() const { return m_.parameter_count(); }

  double sequence_logprob(std::vector<TokenId> source, const std::vector<TokenId>& target,
                          const std::string& direction) const {
    py::gil_scoped_release release;
    return m_.sequence_logprob(with_eos(std::move(source)), target, model::parse_direction(direction)).total;
  }

  py::list beam_search(std::vector<TokenId> source, const std::string& direction, std::size_t beam, double alpha,
                       std::size_t max_len) const {
    std::vector<inference::Hypothesis> hs;
    {
      py::gil_scoped_release release;
      hs = inference::beam_search(m_, std::span<const TokenId>(with_eos(std::move(source))),
                                  model::parse_direction(direction), decode_config(beam, alpha, max_len, "prefer_l2r"));
    }
    py::list out;
    for (const auto& h : hs) out.append(hypothesis_dict(h));
    return out;
  }

  py::dict translate(std::vector<TokenId> source, const std::string& mode, std::size_t beam, double alpha,
                     std::size_t max_len, const std::string& tie_break) const {
    inference::Translation t;
    {
      py::gil_scoped_release release;
      t = inference::translate(m_, with_eos(std::move(source)), decode_config(beam, alpha, max_len, tie_break),
                               inference::parse_mode(mode));
    }
    auto d = hypothesis_dict(t.best);
    d["combined"] = t.combined_score ? py::cast(*t.combined_score) : py::none();
    py::list candidates;
    for (const auto& c : t.candidates) {
      auto cd = hypothesis_dict(c.hypothesis);
      cd["combined"] = c.combined_score;
      candidates.append(cd);
    }
    d["candidates"] = candidates;
    d["encoder_calls"] = t.encoder_calls;
    d["rescored_rows"] = t.rescored_rows;
    return d;
  }

  py::dict counters() const {
    const auto& c = m_.counters();
    py::dict d;
    d["encoded_sources"] = c.encoded_sources.load();
    d["decoder_calls"] = c.decoder_calls.load();
    d["decoder_rows"] = c.decoder_rows.load();
    d["teacher_forced_rows"] = c.teacher_forced_rows.load();
    return d;
  }

 private:
  model::Transformer<float> m_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bidirectional Transformer translation core";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", error.ptr());
  static py::exception<NumericError> numeric_error(m, "NumericError", error.ptr());
  static py::exception<UsageError> usage_error(m, "UsageError", error.ptr());
  static py::exception<DataError> data_error(m, "DataError", error.ptr());
  static py::exception<ModelError> model_error(m, "ModelError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      config_error(e.what());
    } catch (const NumericError& e) {
      numeric_error(e.what());
    } catch (const UsageError& e) {
      usage_error(e.what());
    } catch (const DataError& e) {
      data_error(e.what());
    } catch (const ModelError& e) {
      model_error(e.what());
    } catch (const Error& e) {
      error(e.what());
    }
  });

  m.attr("PAD") = text::kPad;
  m.attr("UNK") = text::kUnk;
  m.attr("EOS") = text::kEos;
  m.attr("SOS_L2R") = text::kSosL2R;
  m.attr("SOS_R2L") = text::kSosR2L;

  py::class_<text::BpeModel>(m, "BpeModel")
      .def(py::init<>())
      .def_static(
          "learn",
          [](const std::vector<std::string>& corpus, std::size_t merges, std::size_t min_frequency) {
            return text::BpeModel::learn(corpus, merges, min_frequency);
          },
          py::arg("corpus"), py::arg("num_merges"),
                  py::arg("min_frequency") = 2)
      .def_static("load", &text::BpeModel::load)
      .def_static("from_merges",
                  [](const std::vector<std::pair<std::string, std::string>>& merges) {
                    std::vector<text::MergeRule> rules;
                    for (const auto& [l, r] : merges) rules.push_back({l, r});
                    return text::BpeModel::from_merges(std::move(rules));
                  })
      .def("save", &text::BpeModel::save)
      .def("apply", &text::BpeModel::apply)
      .def_property_readonly("merges",
                             [](const text::BpeModel& b) {
                               std::vector<std::pair<std::string, std::string>> out;
                               for (const auto& r : b.merges()) out.emplace_back(r.left, r.right);
                               return out;
                             })
      .def("__len__", &text::BpeModel::num_merges);

  py::class_<text::Vocab>(m, "Vocab")
      .def(py::init<>())
      .def_static("build", [](const std::vector<std::vector<std::string>>& corpus) { return text::Vocab::build(corpus); })
      .def_static("from_tokens", [](const std::vector<std::string>& tokens) { return text::Vocab::from_tokens(tokens); })
      .def_static("load", &text::Vocab::load)
      .def("save", &text::Vocab::save)
      .def("id", &text::Vocab::id)
      .def("token", &text::Vocab::token)
      .def("encode", [](const text::Vocab& v, const std::vector<std::string>& t) { return v.encode(t); })
      .def("decode", [](const text::Vocab& v, const std::vector<TokenId>& ids) { return v.decode(ids); })
      .def_property_readonly("tokens", &text::Vocab::tokens)
      .def("__len__", &text::Vocab::size)
      .def("__contains__", &text::Vocab::contains);

  m.def(
      "bleu",
      [](const std::vector<std::string>& hyps, const std::vector<std::string>& refs, bool tokenize, bool lowercase) {
        std::vector<eval::Tokens> h, r;
        for (const auto& s : hyps) h.push_back(eval::split_whitespace(tokenize ? eval::tokenize_13a(s) : s));
        for (const auto& s : refs) r.push_back(eval::split_whitespace(tokenize ? eval::tokenize_13a(s) : s));
        return to_python(eval::bleu(h, r, lowercase).to_json());
      },
      py::arg("hypotheses"), py::arg("references"), py::arg("tokenize") = true, py::arg("lowercase") = false,
      "Corpus BLEU in [0, 100] with n-gram statistics.");
  m.def("tokenize_13a", &eval::tokenize_13a);
  m.def(
      "position_accuracy",
      [](const std::vector<std::vector<std::string>>& hyps, const std::vector<std::vector<std::string>>& refs,
         std::size_t n) { return to_python(eval::position_accuracy(hyps, refs, n).to_json()); },
      py::arg("hypotheses"), py::arg("references"), py::arg("n") = 4);
  m.def("direction_share", [](const std::vector<std::string>& origins) {
    std::vector<model::Direction> d;
    for (const auto& o : origins) d.push_back(model::parse_direction(o));
    return to_python(eval::direction_share(d).to_json());
  });
  m.def("length_penalty", &inference::length_penalty, py::arg("n"), py::arg("alpha"));

  m.def(
      "small_config",
      [](std::size_t src, std::size_t tgt) { return to_python(nlohmann::json(model::ModelConfig::small(src, tgt))); },
      py::arg("src_vocab"), py::arg("tgt_vocab"));
  m.def(
      "big_config",
      [](std::size_t src, std::size_t tgt) { return to_python(nlohmann::json(model::ModelConfig::big(src, tgt))); },
      py::arg("src_vocab"), py::arg("tgt_vocab"));

  py::class_<Model>(m, "Model")
      .def_static("initialized", &Model::initialized, py::arg("config"), py::arg("seed") = 1)
      .def_static("load", &Model::load, py::arg("path"))
      .def("save", &Model::save, py::arg("path"))
      .def_property_readonly("config", &Model::config)
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def_property_readonly("counters", &Model::counters)
      .def("sequence_logprob", &Model::sequence_logprob, py::arg("source"), py::arg("target"),
           py::arg("direction") = "l2r")
      .def("beam_search", &Model::beam_search, py::arg("source"), py::arg("direction") = "l2r", py::arg("beam") = 4,
           py::arg("alpha") = 0.6, py::arg("max_len") = 200)
      .def("translate", &Model::translate, py::arg("source"), py::arg("mode") = "bidi", py::arg("beam") = 4,
           py::arg("alpha") = 0.6, py::arg("max_len") = 200, py::arg("tie_break") = "prefer_l2r");

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "bidirnmt");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a bidirnmt subcommand in-process; returns (exit_code, stdout, stderr).");
}
