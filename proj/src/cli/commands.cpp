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

#include "bidir/cli/commands.h"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bidir/cli/run_config.h"
#include "bidir/data/corpus.h"
#include "bidir/errors.h"
#include "bidir/evaluation/metrics.h"
#include "bidir/inference/decoder.h"
#include "bidir/model/checkpoint.h"
#include "bidir/tokenizer/tokenizer.h"
#include "bidir/training/trainer.h"

namespace bidir::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> read_input(const std::string& path) {
  if (path == "-") {
    std::vector<std::string> lines;
    for (std::string line; std::getline(std::cin, line);) lines.push_back(line);
    return lines;
  }
  return data::read_lines(path);
}

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (path != "-") {
      file_.open(path);
      if (!file_) throw DataError("cannot write " + path);
      stream_ = &file_;
    }
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

std::string format_score(std::optional<double> v) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::setprecision(6) << std::fixed << *v;
  return s.str();
}

json merges_to_json(const text::BpeModel& bpe) {
  json out = json::array();
  for (const auto& m : bpe.merges()) out.push_back({m.left, m.right});
  return out;
}

text::BpeModel merges_from_json(const json& j) {
  std::vector<text::MergeRule> rules;
  for (const auto& m : j) rules.push_back({m.at(0).get<std::string>(), m.at(1).get<std::string>()});
  return text::BpeModel::from_merges(std::move(rules));
}

json tokenizer_to_json(const text::Tokenizer& tok) {
  json out;
  out["vocab"] = tok.vocab.tokens();
  out["lowercase"] = tok.lowercase;
  if (tok.bpe) out["merges"] = merges_to_json(*tok.bpe);
  return out;
}

text::Tokenizer tokenizer_from_json(const json& j) {
  text::Tokenizer tok;
  auto tokens = j.at("vocab").get<std::vector<std::string>>();
  if (tokens.size() < text::kNumSpecial) throw ModelError("checkpoint vocabulary is truncated");
  std::vector<std::string> regular(tokens.begin() + text::kNumSpecial, tokens.end());
  tok.vocab = text::Vocab::from_tokens(regular);
  tok.lowercase = j.value("lowercase", false);
  if (j.contains("merges")) tok.bpe = merges_from_json(j.at("merges"));
  return tok;
}

text::Tokenizer load_tokenizer(const fs::path& vocab, const fs::path& merges, bool lowercase,
                               std::string_view side) {
  if (vocab.empty()) throw ConfigError("data." + std::string(side) + "_vocab is required");
  text::Tokenizer tok;
  tok.vocab = text::Vocab::load(vocab);
  tok.lowercase = lowercase;
  if (!merges.empty()) tok.bpe = text::BpeModel::load(merges);
  return tok;
}

void apply_sets(RunConfig& config, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
}

// learn-bpe

struct LearnBpeArgs {
  std::vector<std::string> inputs;
  std::size_t merges = 0;
  std::size_t min_frequency = 2;
  std::string output;
  std::string vocab_output;
  bool lowercase = false;
};

int learn_bpe(const LearnBpeArgs& a, std::ostream& out) {
  std::vector<std::string> corpus;
  for (const auto& path : a.inputs) {
    for (auto& line : read_input(path)) corpus.push_back(a.lowercase ? text::ascii_lower(line) : std::move(line));
  }
  auto bpe = text::BpeModel::learn(corpus, a.merges, a.min_frequency);
  bpe.save(a.output);
  out << "learned " << bpe.num_merges() << " merges from " << corpus.size() << " lines\n";
  if (!a.vocab_output.empty()) {
    std::vector<std::vector<std::string>> segmented;
    segmented.reserve(corpus.size());
    for (const auto& line : corpus) segmented.push_back(bpe.apply(line));
    auto vocab = text::Vocab::build(segmented);
    vocab.save(a.vocab_output);
    out << "vocabulary of " << vocab.size() << " tokens\n";
  }
  return kExitOk;
}

// apply-bpe

struct ApplyBpeArgs {
  std::string merges;
  std::string input = "-";
  std::string output = "-";
  bool lowercase = false;
};

int apply_bpe(const ApplyBpeArgs& a, std::ostream& out) {
  const auto bpe = text::BpeModel::load(a.merges);
  Output sink(a.output, out);
  for (const auto& line : read_input(a.input)) {
    const auto pieces = bpe.apply(a.lowercase ? text::ascii_lower(line) : line);
    for (std::size_t i = 0; i < pieces.size(); ++i) *sink << (i ? " " : "") << pieces[i];
    *sink << '\n';
  }
  return kExitOk;
}

// build-vocab

struct BuildVocabArgs {
  std::vector<std::string> inputs;
  std::string output;
};

int build_vocab(const BuildVocabArgs& a, std::ostream& out) {
  std::vector<std::vector<std::string>> corpus;
  for (const auto& path : a.inputs) {
    for (const auto& line : read_input(path)) corpus.push_back(text::split_words(line));
  }
  auto vocab = text::Vocab::build(corpus);
  vocab.save(a.output);
  out << "vocabulary of " << vocab.size() << " tokens\n";
  return kExitOk;
}

// train

struct TrainArgs {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> directions;
  std::optional<std::string> run_dir;
  bool fresh = false;
};

int train(const TrainArgs& a, std::ostream& out) {
  auto config = RunConfig::load(a.config);
  apply_sets(config, a.sets);
  if (a.seed) config.seed = *a.seed;
  if (a.directions) config.set("train.directions", *a.directions);
  if (a.run_dir) config.run_dir = *a.run_dir;
  config.validate();

  const auto src_tok =
      load_tokenizer(config.data.source_vocab, config.data.source_merges, config.data.lowercase, "source");
  const auto tgt_tok =
      load_tokenizer(config.data.target_vocab, config.data.target_merges, config.data.lowercase, "target");

  auto model_config = config.model;
  model_config.src_vocab_size = src_tok.vocab.size();
  model_config.tgt_vocab_size = tgt_tok.vocab.size();
  model_config.validate();

  auto train_config = config.train;
  train_config.seed = config.seed;
  train_config.checkpoint_dir = config.run_dir / "checkpoints";
  train_config.validate();

  if (config.data.train_source.empty() || config.data.train_target.empty()) {
    throw ConfigError("data.train_source and data.train_target are required");
  }
  const auto corpus = data::load_parallel(config.data.train_source, config.data.train_target, src_tok, tgt_tok,
                                          config.data.max_len);
  if (corpus.pairs.empty()) throw DataError("training corpus is empty");
  std::optional<data::Corpus> dev;
  if (!config.data.dev_source.empty()) {
    dev = data::load_parallel(config.data.dev_source, config.data.dev_target, src_tok, tgt_tok, config.data.max_len);
  }

  fs::create_directories(train_config.checkpoint_dir);
  {
    std::ofstream ini(config.run_dir / "config.ini");
    ini << config.to_ini();
  }

  nn::Rng init_rng(config.seed);
  auto model = model::Transformer<float>::initialized(model_config, init_rng);
  training::Trainer trainer(model, train_config);
  trainer.checkpoint_extra = {{"source_tokenizer", tokenizer_to_json(src_tok)},
                              {"target_tokenizer", tokenizer_to_json(tgt_tok)},
                              {"decode", {{"beam", config.decode.beam}, {"alpha", config.decode.alpha}}}};
  trainer.validation_decode = config.decode;

  if (!a.fresh) {
    if (auto latest = training::Trainer::latest_checkpoint(train_config.checkpoint_dir)) {
      trainer.resume(*latest);
      out << "resumed from " << latest->string() << " at step " << trainer.step() << '\n';
    }
  }

  std::ofstream report(config.run_dir / "train_report.jsonl", std::ios::app);
  out << "training " << model.parameter_count() << " parameters on " << corpus.pairs.size() << " pairs";
  if (corpus.dropped) out << " (" << corpus.dropped << " dropped)";
  out << '\n';
  const auto result = trainer.run(corpus, dev ? &*dev : nullptr, &report);
  out << "finished at step " << trainer.step();
  if (!result.steps.empty()) out << ", last loss " << result.steps.back().loss;
  out << '\n';
  if (result.steps_to_threshold) out << "loss threshold reached at step " << *result.steps_to_threshold << '\n';
  return kExitOk;
}

// translate

struct TranslateArgs {
  std::string checkpoint;
  std::string config;
  std::string input = "-";
  std::string output = "-";
  std::string nbest_output;
  std::size_t nbest = 0;
  std::string provenance;
  std::optional<std::size_t> beam;
  std::optional<double> alpha;
  std::optional<std::string> mode;
  std::optional<std::size_t> max_len;
  std::optional<std::string> tie_break;
  std::string source_vocab;
  std::string target_vocab;
  std::size_t threads = 1;
  bool report_combined = false;
  bool normalize_combined = false;
};

struct LineResult {
  inference::Translation translation;
  std::string text;
};

json provenance_record(std::size_t line, const inference::Translation& t, bool with_counts) {
  const auto& h = t.best;
  json r;
  r["line"] = line;
  r["origin"] = model::to_string(h.origin);
  r["found_by_both"] = h.found_by_both;
  r["finished"] = h.finished;
  r["length"] = h.tokens.size();
  r["logprob_l2r"] = h.logprob_l2r ? json(*h.logprob_l2r) : json(nullptr);
  r["logprob_r2l"] = h.logprob_r2l ? json(*h.logprob_r2l) : json(nullptr);
  r["combined"] = t.combined_score ? json(*t.combined_score) : json(nullptr);
  if (with_counts) {
    r["encoder_calls"] = t.encoder_calls;
    r["rescored_rows"] = t.rescored_rows;
  }
  return r;
}

int translate(const TranslateArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig config;
  if (!a.config.empty()) config = RunConfig::load(a.config);
  fs::path checkpoint = a.checkpoint;
  if (checkpoint.empty()) {
    if (a.config.empty()) throw UsageError("translate needs --checkpoint or --config");
    auto latest = training::Trainer::latest_checkpoint(config.run_dir / "checkpoints");
    if (!latest) throw ModelError("no checkpoint under " + (config.run_dir / "checkpoints").string());
    checkpoint = *latest;
  }

  auto decode = config.decode;
  auto mode = config.mode;
  if (a.beam) decode.beam = *a.beam;
  if (a.alpha) decode.alpha = *a.alpha;
  if (a.max_len) decode.max_len = *a.max_len;
  if (a.tie_break) decode.tie_break = inference::parse_tie_break(*a.tie_break);
  if (a.mode) mode = inference::parse_mode(*a.mode);
  if (a.report_combined) decode.report_combined = true;
  if (a.normalize_combined) decode.normalize_combined = true;
  decode.validate();
  if (a.threads == 0) throw UsageError("--threads must be at least 1");

  const auto file = model::read_checkpoint_file(checkpoint);
  const auto model = model::load_model(file);
  const json* user = nullptr;
  if (file.header.contains("extra") && file.header["extra"].contains("user")) user = &file.header["extra"]["user"];

  auto pick_tokenizer = [&](const std::string& vocab_override, const char* key, std::size_t expected) {
    text::Tokenizer tok;
    if (!vocab_override.empty()) {
      tok.vocab = text::Vocab::load(vocab_override);
      tok.lowercase = config.data.lowercase;
      const auto& merges = std::string_view(key) == "source_tokenizer" ? config.data.source_merges
                                                                       : config.data.target_merges;
      if (!merges.empty()) tok.bpe = text::BpeModel::load(merges);
    } else if (user && user->contains(key)) {
      tok = tokenizer_from_json(user->at(key));
    } else {
      throw ModelError(checkpoint.string() + " carries no tokenizer; pass --source-vocab and --target-vocab");
    }
    if (tok.vocab.size() != expected) {
      throw ModelError("vocabulary has " + std::to_string(tok.vocab.size()) + " tokens but the model expects " +
                       std::to_string(expected));
    }
    return tok;
  };
  const auto src_tok = pick_tokenizer(a.source_vocab, "source_tokenizer", model.config().src_vocab_size);
  const auto tgt_tok = pick_tokenizer(a.target_vocab, "target_tokenizer", model.config().tgt_vocab_size);

  const auto lines = read_input(a.input);
  const auto encoded_before = model.counters().encoded_sources.load();
  const auto rescored_before = model.counters().teacher_forced_rows.load();
  std::vector<LineResult> results(lines.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < lines.size();) {
      try {
        auto ids = src_tok.encode(lines[i]);
        ids.push_back(text::kEos);
        if (ids.size() > model.config().max_positions) ids.resize(model.config().max_positions);
        results[i].translation = inference::translate(model, ids, decode, mode);
        results[i].text = tgt_tok.decode(results[i].translation.best.tokens);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!failure) failure = std::current_exception();
        next = lines.size();
      }
    }
  };
  const std::size_t threads = std::min(a.threads, std::max<std::size_t>(lines.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  Output sink(a.output, out);
  for (const auto& r : results) *sink << r.text << '\n';

  if (a.nbest > 0) {
    if (a.nbest_output.empty()) throw UsageError("--nbest needs --nbest-output");
    Output nb(a.nbest_output, out);
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& t = results[i].translation;
      std::vector<std::pair<const inference::Hypothesis*, std::optional<double>>> rows;
      if (!t.candidates.empty()) {
        auto sorted = t.candidates;
        std::stable_sort(sorted.begin(), sorted.end(),
                         [](const auto& x, const auto& y) { return x.combined_score > y.combined_score; });
        for (std::size_t k = 0; k < sorted.size() && k < a.nbest; ++k) {
          const auto it = std::find_if(t.candidates.begin(), t.candidates.end(),
                                       [&](const auto& c) { return c.hypothesis.tokens == sorted[k].hypothesis.tokens; });
          rows.emplace_back(&it->hypothesis, it->combined_score);
        }
      } else {
        for (std::size_t k = 0; k < t.beam.size() && k < a.nbest; ++k) {
          rows.emplace_back(&t.beam[k], k == 0 ? t.combined_score : std::nullopt);
        }
      }
      for (const auto& [h, combined] : rows) {
        *nb << i << ' ' << model::to_string(h->origin) << ' ' << format_score(h->logprob_l2r) << ' '
            << format_score(h->logprob_r2l) << ' ' << format_score(combined) << '\t' << tgt_tok.decode(h->tokens)
            << '\n';
      }
    }
  }

  // Per-line counts come from shared counters, so they are only exact when
  // one thread decodes.
  const auto encoder_calls = model.counters().encoded_sources.load() - encoded_before;
  const auto rescored_rows = model.counters().teacher_forced_rows.load() - rescored_before;
  if (!a.provenance.empty()) {
    std::ofstream prov(a.provenance);
    if (!prov) throw DataError("cannot write " + a.provenance);
    for (std::size_t i = 0; i < results.size(); ++i) prov << provenance_record(i, results[i].translation, threads == 1).dump() << '\n';
  }
  err << "translated " << lines.size() << " lines with mode " << inference::to_string(mode) << ", beam "
      << decode.beam << "; encoder calls " << encoder_calls << ", rescored rows " << rescored_rows << '\n';
  return kExitOk;
}

// score

struct ScoreArgs {
  std::string hyp;
  std::string ref;
  bool tokenized = false;
  bool lowercase = false;
  std::size_t position_n = 4;
};

int score(const ScoreArgs& a, std::ostream& out) {
  auto hyps = data::read_lines(a.hyp);
  auto refs = data::read_lines(a.ref);
  if (hyps.size() != refs.size()) {
    throw DataError(a.hyp + " has " + std::to_string(hyps.size()) + " lines but " + a.ref + " has " +
                    std::to_string(refs.size()));
  }
  std::vector<eval::Tokens> h, r;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    h.push_back(eval::split_whitespace(a.tokenized ? hyps[i] : eval::tokenize_13a(hyps[i])));
    r.push_back(eval::split_whitespace(a.tokenized ? refs[i] : eval::tokenize_13a(refs[i])));
  }
  json report;
  report["bleu"] = eval::bleu(h, r, a.lowercase).to_json();
  if (a.lowercase) {
    for (auto* side : {&h, &r}) {
      for (auto& toks : *side) {
        for (auto& t : toks) t = text::ascii_lower(t);
      }
    }
  }
  report["position_accuracy"] = eval::position_accuracy(h, r, a.position_n).to_json();
  out << report.dump(2) << '\n';
  return kExitOk;
}

// stats

struct StatsArgs {
  std::string provenance;
};

int stats(const StatsArgs& a, std::ostream& out) {
  std::vector<model::Direction> origins;
  std::size_t both = 0, unfinished = 0, line_no = 0;
  for (const auto& line : data::read_lines(a.provenance)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
      origins.push_back(model::parse_direction(rec.at("origin").get<std::string>()));
    } catch (const json::exception& e) {
      throw DataError(a.provenance + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const UsageError& e) {
      throw DataError(a.provenance + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (rec.value("found_by_both", false)) ++both;
    if (!rec.value("finished", true)) ++unfinished;
  }
  json report = eval::direction_share(origins).to_json();
  report["found_by_both"] = both;
  report["unfinished"] = unfinished;
  report["sentences"] = origins.size();
  out << report.dump(2) << '\n';
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bidirectional Transformer translation toolkit", "bidirnmt"};
  app.require_subcommand(1);

  LearnBpeArgs lb;
  auto* learn = app.add_subcommand("learn-bpe", "learn BPE merges from text");
  learn->add_option("--input", lb.inputs, "training text, one sentence per line")->required();
  learn->add_option("--merges", lb.merges, "number of merge operations")->required();
  learn->add_option("--min-frequency", lb.min_frequency, "stop when the best pair is rarer");
  learn->add_option("--output", lb.output, "merges file")->required();
  learn->add_option("--vocab-output", lb.vocab_output, "also write the segmented vocabulary");
  learn->add_flag("--lowercase", lb.lowercase);

  ApplyBpeArgs ab;
  auto* apply = app.add_subcommand("apply-bpe", "segment text with learned merges");
  apply->add_option("--merges", ab.merges)->required();
  apply->add_option("--input", ab.input);
  apply->add_option("--output", ab.output);
  apply->add_flag("--lowercase", ab.lowercase);

  BuildVocabArgs bv;
  auto* vocab = app.add_subcommand("build-vocab", "collect the vocabulary of segmented text");
  vocab->add_option("--input", bv.inputs)->required();
  vocab->add_option("--output", bv.output)->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a bidirectional model");
  train_cmd->add_option("--config", tr.config, "INI run configuration")->required();
  train_cmd->add_option("--set", tr.sets, "override a config key, section.name=value");
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--directions", tr.directions, "both, l2r or r2l");
  train_cmd->add_option("--run-dir", tr.run_dir);
  train_cmd->add_flag("--fresh", tr.fresh, "ignore existing checkpoints");

  TranslateArgs tl;
  auto* translate_cmd = app.add_subcommand("translate", "decode source sentences");
  translate_cmd->add_option("--checkpoint", tl.checkpoint);
  translate_cmd->add_option("--config", tl.config, "take decoding settings and the latest checkpoint from a run");
  translate_cmd->add_option("--input", tl.input);
  translate_cmd->add_option("--output", tl.output);
  translate_cmd->add_option("--nbest", tl.nbest, "candidates per sentence written to --nbest-output");
  translate_cmd->add_option("--nbest-output", tl.nbest_output);
  translate_cmd->add_option("--provenance", tl.provenance, "per-sentence JSON lines");
  translate_cmd->add_option("--beam", tl.beam);
  translate_cmd->add_option("--alpha", tl.alpha);
  translate_cmd->add_option("--mode", tl.mode, "bidi, l2r, r2l or l2r-pool-only");
  translate_cmd->add_option("--max-len", tl.max_len);
  translate_cmd->add_option("--tie-break", tl.tie_break, "prefer_l2r or prefer_r2l");
  translate_cmd->add_option("--source-vocab", tl.source_vocab);
  translate_cmd->add_option("--target-vocab", tl.target_vocab);
  translate_cmd->add_option("--threads", tl.threads);
  translate_cmd->add_flag("--report-combined", tl.report_combined);
  translate_cmd->add_flag("--normalize-combined", tl.normalize_combined);

  ScoreArgs sc;
  auto* score_cmd = app.add_subcommand("score", "corpus BLEU and positional accuracy");
  score_cmd->add_option("--hyp", sc.hyp)->required();
  score_cmd->add_option("--ref", sc.ref)->required();
  score_cmd->add_flag("--tokenized", sc.tokenized, "skip 13a tokenization");
  score_cmd->add_flag("--lowercase", sc.lowercase);
  score_cmd->add_option("--position-n", sc.position_n);

  StatsArgs st;
  auto* stats_cmd = app.add_subcommand("stats", "winner direction shares from a provenance file");
  stats_cmd->add_option("--provenance", st.provenance)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDataError;
  }

  try {
    if (*learn) return learn_bpe(lb, out);
    if (*apply) return apply_bpe(ab, out);
    if (*vocab) return build_vocab(bv, out);
    if (*train_cmd) return train(tr, out);
    if (*translate_cmd) return translate(tl, out, err);
    if (*score_cmd) return score(sc, out);
    if (*stats_cmd) return stats(st, out);
  } catch (const ModelError& e) {
    err << "model error: " << e.what() << '\n';
    return kExitModelError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitDataError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitDataError;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace bidir::cli
