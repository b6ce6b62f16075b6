#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "embnmt/checkpoint.hpp"
#include "embnmt/corpus.hpp"
#include "embnmt/embeddings.hpp"
#include "embnmt/errors.hpp"
#include "embnmt/eval.hpp"
#include "embnmt/inference.hpp"
#include "embnmt/toy_corpus.hpp"
#include "embnmt/trainer.hpp"
#include "embnmt/vocab.hpp"

namespace fs = std::filesystem;

namespace embnmt::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Keeps empty lines so that files stay line-aligned.
std::vector<Sentence> read_sentences(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Sentence> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(split_tokens(line));
  return out;
}

void write_sentences(const fs::path& path, const std::vector<Sentence>& sentences) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? " " : "") << s[i];
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " path is required");
  if (!fs::is_regular_file(path)) throw IoError(what + " not found: " + path);
}

void ensure_parent(const fs::path& path) {
  const fs::path parent = path.parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

// Config file values become option defaults, so flags given on the command
// line still win.
void apply_config(CLI::App& sub, const std::map<std::string, std::string>& config) {
  for (const auto& [key, value] : config) {
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config") {
      throw ConfigError("unknown config key '" + key + "' for " + sub.get_name());
    }
    opt->default_val(value);
  }
}

std::string find_config_arg(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return {};
}

// --------------------------------------------------------------------------

struct GenToyArgs {
  std::string out_dir;
  std::uint64_t seed = 1;
  ToyCorpusSpec spec;
};

int cmd_gen_toy(const GenToyArgs& a, std::ostream& out) {
  a.spec.validate();
  const ToyCorpus toy = generate_toy_corpus(a.spec, a.seed);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  for (const ParallelCorpus* c : {&toy.train, &toy.valid, &toy.test}) {
    const fs::path src = dir / (c->name + ".src");
    const fs::path tgt = dir / (c->name + ".tgt");
    save_side(src, c->sources());
    save_side(tgt, c->targets());
    out << src.string() << '\n' << tgt.string() << '\n';
  }
  const fs::path emb = dir / "embeddings.txt";
  std::ofstream f(emb);
  f << toy.embeddings_text;
  if (!f) throw IoError("write failed: " + emb.string());
  out << emb.string() << '\n';
  return kExitOk;
}

// --------------------------------------------------------------------------

struct BuildVocabArgs {
  std::string input;
  std::string output;
  std::size_t size = 20000;
};

int cmd_build_vocab(const BuildVocabArgs& a, std::ostream& out) {
  require_file(a.input, "input");
  if (a.output.empty()) throw ConfigError("--out is required");
  const Vocabulary vocab = build_vocab(read_sentences(a.input), a.size);
  ensure_parent(a.output);
  vocab.save(a.output);
  out << "vocabulary " << vocab.size() << " entries -> " << a.output << '\n';
  return kExitOk;
}

// --------------------------------------------------------------------------

struct TrainArgs {
  std::string train_src, train_tgt, valid_src, valid_tgt;
  std::string embeddings;
  std::string output = "model.ckpt";
  std::string log = "train.log";
  std::string strategy = "ent";
  std::size_t pretrain_epochs = 0;  // 0: until the first plateau
  bool allow_emb_scratch = false;
  std::size_t source_vocab = 20000;
  std::size_t target_vocab = 20000;
  std::size_t max_sentence_len = 60;  // 0: no filter
  TrainConfig config;
};

std::string effective_train_config(const TrainArgs& a) {
  const TrainConfig& c = a.config;
  std::ostringstream s;
  s << "train_src=" << a.train_src << '\n'
    << "train_tgt=" << a.train_tgt << '\n'
    << "valid_src=" << a.valid_src << '\n'
    << "valid_tgt=" << a.valid_tgt << '\n'
    << "embeddings=" << a.embeddings << '\n'
    << "out=" << a.output << '\n'
    << "strategy=" << a.strategy << '\n'
    << "pretrain_epochs=" << a.pretrain_epochs << '\n'
    << "source_vocab=" << a.source_vocab << '\n'
    << "target_vocab=" << a.target_vocab << '\n'
    << "max_sentence_len=" << a.max_sentence_len << '\n'
    << "lr=" << num(c.learning_rate) << '\n'
    << "beta1=" << num(c.beta1) << '\n'
    << "beta2=" << num(c.beta2) << '\n'
    << "epsilon=" << num(c.epsilon) << '\n'
    << "clip=" << num(c.grad_clip) << '\n'
    << "weight_decay=" << num(c.weight_decay) << '\n'
    << "dropout=" << num(c.dropout) << '\n'
    << "lr_decay=" << num(c.lr_decay_factor) << '\n'
    << "lambda=" << num(c.lambda) << '\n'
    << "batch_size=" << c.batch_size << '\n'
    << "embed_dim=" << c.embed_dim << '\n'
    << "hidden_dim=" << c.hidden_dim << '\n'
    << "layers=" << c.layers << '\n'
    << "epochs=" << c.max_epochs << '\n'
    << "seed=" << c.seed;
  return s.str();
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  TrainingStrategy strategy;
  strategy.kind = parse_strategy(a.strategy);
  if (a.pretrain_epochs) strategy.pretrain_epochs = a.pretrain_epochs;
  strategy.allow_emb_from_scratch = a.allow_emb_scratch;
  if (strategy.needs_embeddings() && a.embeddings.empty()) {
    throw ConfigError("strategy '" + a.strategy + "' requires --embeddings");
  }
  a.config.validate();
  require_file(a.train_src, "training source");
  require_file(a.train_tgt, "training target");
  require_file(a.valid_src, "validation source");
  require_file(a.valid_tgt, "validation target");
  if (!a.embeddings.empty()) require_file(a.embeddings, "embeddings");

  ParallelCorpus train = load_parallel(a.train_src, a.train_tgt);
  ParallelCorpus valid = load_parallel(a.valid_src, a.valid_tgt);
  // Validation data is never filtered.
  if (a.max_sentence_len) train = filter_by_length(train, a.max_sentence_len);
  if (train.empty()) throw StructuralError("training corpus is empty");
  const Vocabulary src_vocab = build_vocab(train.sources(), a.source_vocab);
  const Vocabulary tgt_vocab = build_vocab(train.targets(), a.target_vocab);

  std::optional<EmbeddingStore> store;
  if (!a.embeddings.empty()) {
    store.emplace(align_to_vocab(load_text_embeddings(a.embeddings), tgt_vocab, a.config.seed));
    out << "embedding coverage " << num(store->coverage()) << '\n';
  }
  const EmbeddingStore* store_ptr = store ? &*store : nullptr;
  strategy.validate(store_ptr);

  const TrainConfig& c = a.config;
  const ModelParams initial({src_vocab.size(), tgt_vocab.size(), c.embed_dim, c.hidden_dim, c.layers}, c.seed);
  const auto train_batches = prepare_batches(make_batches(train, src_vocab, tgt_vocab, c.batch_size), store_ptr,
                                             tgt_vocab);
  const auto valid_batches = prepare_batches(make_batches(valid, src_vocab, tgt_vocab, c.batch_size), store_ptr,
                                             tgt_vocab);

  RunResult result = run_strategy(initial, train_batches, valid_batches, c, strategy, store_ptr,
                                  [&out](const EpochLogRow& row) { out << format_log_row(row) << std::endl; });

  ensure_parent(a.log);
  std::ofstream log(a.log);
  if (!log) throw IoError("cannot write " + a.log);
  write_training_log(log, result.log, effective_train_config(a));

  Checkpoint ckpt{std::move(result.best), src_vocab, tgt_vocab, result.best_meta, strategy.kind, c,
                  std::move(result.best_adam)};
  ckpt.meta.parameter_file = a.output;
  ensure_parent(a.output);
  save_checkpoint(a.output, ckpt);
  out << "best epoch " << ckpt.meta.epoch << " valid " << num(ckpt.meta.valid_loss) << " -> " << a.output << '\n';
  return kExitOk;
}

// --------------------------------------------------------------------------

struct TranslateArgs {
  std::string checkpoint, input, output;
  std::string source_vocab, target_vocab;
  std::size_t beam = 1;
  double alpha = 0.0;
  std::size_t max_len = 0;
  bool parallel = false;
};

int cmd_translate(const TranslateArgs& a, std::ostream& out) {
  require_file(a.checkpoint, "checkpoint");
  require_file(a.input, "input");
  if (a.output.empty()) throw ConfigError("--out is required");
  if (a.beam < 1) throw ConfigError("--beam must be >= 1");
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  if (!a.source_vocab.empty() && Vocabulary::load(a.source_vocab) != ckpt.source_vocab) {
    throw IntegrityError("source vocabulary " + a.source_vocab + " does not match the checkpoint");
  }
  if (!a.target_vocab.empty() && Vocabulary::load(a.target_vocab) != ckpt.target_vocab) {
    throw IntegrityError("target vocabulary " + a.target_vocab + " does not match the checkpoint");
  }

  const std::vector<Sentence> inputs = read_sentences(a.input);
  std::vector<Sentence> outputs(inputs.size());
  const DecodeOptions options{a.beam, a.max_len, a.alpha};
  auto decode = [&](std::size_t i) {
    outputs[i] = translate_sentence(ckpt.params, ckpt.source_vocab, ckpt.target_vocab, inputs[i], options);
  };

  const std::size_t workers = a.parallel ? std::min(thread_limit(), std::max<std::size_t>(1, inputs.size())) : 1;
  if (workers <= 1) {
    for (std::size_t i = 0; i < inputs.size(); ++i) decode(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < inputs.size(); i = next++) {
          try {
            decode(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  ensure_parent(a.output);
  write_sentences(a.output, outputs);
  out << "translated " << inputs.size() << " lines -> " << a.output << '\n';
  return kExitOk;
}

// --------------------------------------------------------------------------

struct EvaluateArgs {
  std::string hypotheses, references;
  std::string embeddings, vocab;
  std::size_t k = 5;
  bool smooth = false;
  std::string format = "text";
  std::uint64_t seed = 1;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  require_file(a.hypotheses, "hypotheses");
  require_file(a.references, "references");
  if (!a.embeddings.empty() && a.vocab.empty()) throw ConfigError("--embeddings needs --vocab");
  if (!a.embeddings.empty()) require_file(a.embeddings, "embeddings");
  if (!a.vocab.empty()) require_file(a.vocab, "vocabulary");

  const auto hyps = read_sentences(a.hypotheses);
  const auto refs = read_sentences(a.references);
  if (hyps.size() != refs.size()) {
    throw StructuralError("line count mismatch: " + std::to_string(hyps.size()) + " hypotheses vs " +
                          std::to_string(refs.size()) + " references");
  }
  std::optional<Vocabulary> vocab;
  std::optional<EmbeddingStore> store;
  if (!a.embeddings.empty()) {
    vocab.emplace(Vocabulary::load(a.vocab));
    store.emplace(align_to_vocab(load_text_embeddings(a.embeddings), *vocab, a.seed));
  }
  const EvalReport report =
      evaluate(hyps, refs, store ? &*store : nullptr, vocab ? &*vocab : nullptr, a.k, a.smooth);
  if (a.format == "tsv") {
    out << EvalReport::record_header() << '\n' << report.to_record() << '\n';
  } else {
    out << report.to_text();
  }
  return kExitOk;
}

}  // namespace

std::map<std::string, std::string> parse_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty()) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

std::size_t thread_limit() {
  const char* env = std::getenv("EMB_NMT_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1) throw ConfigError("EMB_NMT_THREADS must be a positive integer");
  return static_cast<std::size_t>(v);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Attentional NMT with an embedding-distance training objective", "embnmt"};
  app.require_subcommand(1);
  std::string config_path;

  GenToyArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-toy", "Write the synthetic synonym-cluster corpus and its embeddings");
  gen_cmd->add_option("--out", gen.out_dir, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--clusters", gen.spec.clusters);
  gen_cmd->add_option("--cluster-size", gen.spec.cluster_size);
  gen_cmd->add_option("--min-len", gen.spec.min_len);
  gen_cmd->add_option("--max-len", gen.spec.max_len);
  gen_cmd->add_option("--train-size", gen.spec.train_size);
  gen_cmd->add_option("--valid-size", gen.spec.valid_size);
  gen_cmd->add_option("--test-size", gen.spec.test_size);
  gen_cmd->add_option("--embed-dim", gen.spec.embed_dim);

  BuildVocabArgs bv;
  auto* bv_cmd = app.add_subcommand("build-vocab", "Frequency-truncated vocabulary from a tokenized file");
  bv_cmd->add_option("--input", bv.input)->required();
  bv_cmd->add_option("--out", bv.output)->required();
  bv_cmd->add_option("--size", bv.size, "Total size including the four special tokens");

  TrainArgs tr;
  auto* tr_cmd = app.add_subcommand("train", "Train a model and save the best checkpoint");
  tr_cmd->add_option("--train-src", tr.train_src);
  tr_cmd->add_option("--train-tgt", tr.train_tgt);
  tr_cmd->add_option("--valid-src", tr.valid_src);
  tr_cmd->add_option("--valid-tgt", tr.valid_tgt);
  tr_cmd->add_option("--embeddings", tr.embeddings, "Textual word vectors for the target language");
  tr_cmd->add_option("--out", tr.output, "Checkpoint path");
  tr_cmd->add_option("--log", tr.log, "Training log path");
  tr_cmd->add_option("--strategy", tr.strategy, "ent | combined | combined-after-ent | emb-after-ent | emb-scratch");
  tr_cmd->add_option("--pretrain-epochs", tr.pretrain_epochs, "0 switches at the first validation plateau");
  tr_cmd->add_flag("--allow-emb-scratch", tr.allow_emb_scratch);
  tr_cmd->add_option("--source-vocab", tr.source_vocab);
  tr_cmd->add_option("--target-vocab", tr.target_vocab);
  tr_cmd->add_option("--max-sentence-len", tr.max_sentence_len);
  tr_cmd->add_option("--lr", tr.config.learning_rate);
  tr_cmd->add_option("--beta1", tr.config.beta1);
  tr_cmd->add_option("--beta2", tr.config.beta2);
  tr_cmd->add_option("--epsilon", tr.config.epsilon);
  tr_cmd->add_option("--clip", tr.config.grad_clip);
  tr_cmd->add_option("--weight-decay", tr.config.weight_decay);
  tr_cmd->add_option("--dropout", tr.config.dropout);
  tr_cmd->add_option("--lr-decay", tr.config.lr_decay_factor);
  tr_cmd->add_option("--lambda", tr.config.lambda);
  tr_cmd->add_option("--batch-size", tr.config.batch_size);
  tr_cmd->add_option("--embed-dim", tr.config.embed_dim);
  tr_cmd->add_option("--hidden-dim", tr.config.hidden_dim);
  tr_cmd->add_option("--layers", tr.config.layers);
  tr_cmd->add_option("--epochs", tr.config.max_epochs);
  tr_cmd->add_option("--seed", tr.config.seed);

  TranslateArgs tl;
  auto* tl_cmd = app.add_subcommand("translate", "Decode a tokenized source file line by line");
  tl_cmd->add_option("--checkpoint", tl.checkpoint)->required();
  tl_cmd->add_option("--input", tl.input)->required();
  tl_cmd->add_option("--out", tl.output)->required();
  tl_cmd->add_option("--source-vocab", tl.source_vocab, "Must match the checkpoint when given");
  tl_cmd->add_option("--target-vocab", tl.target_vocab, "Must match the checkpoint when given");
  tl_cmd->add_option("--beam", tl.beam, "Beam width; 1 is greedy");
  tl_cmd->add_option("--alpha", tl.alpha, "Length normalisation exponent");
  tl_cmd->add_option("--max-len", tl.max_len, "0: twice the source length plus 10");
  tl_cmd->add_flag("--parallel", tl.parallel, "Decode with EMB_NMT_THREADS workers");

  EvaluateArgs ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "BLEU, UNK rate and near-miss accuracy");
  ev_cmd->add_option("--hyp", ev.hypotheses)->required();
  ev_cmd->add_option("--ref", ev.references)->required();
  ev_cmd->add_option("--embeddings", ev.embeddings);
  ev_cmd->add_option("--vocab", ev.vocab, "Target vocabulary file, needed with --embeddings");
  ev_cmd->add_option("--k", ev.k, "Neighbourhood size for near-miss accuracy");
  ev_cmd->add_flag("--smooth", ev.smooth, "Add-one smoothing for n-gram orders above 1");
  ev_cmd->add_option("--format", ev.format)->check(CLI::IsMember({"text", "tsv"}));
  ev_cmd->add_option("--seed", ev.seed);

  for (CLI::App* sub : app.get_subcommands({})) sub->add_option("--config", config_path, "key=value defaults");

  try {
    const std::string config_arg = find_config_arg(args);
    if (!config_arg.empty()) {
      CLI::App* target = nullptr;
      for (const auto& a : args) {
        if ((target = app.get_subcommand_ptr(a).get()) != nullptr) break;
      }
      if (target == nullptr) throw ConfigError("--config needs a subcommand");
      apply_config(*target, parse_config_file(config_arg));
    }
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDataError;
  }

  try {
    if (*gen_cmd) return cmd_gen_toy(gen, out);
    if (*bv_cmd) return cmd_build_vocab(bv, out);
    if (*tr_cmd) return cmd_train(tr, out);
    if (*tl_cmd) return cmd_translate(tl, out);
    if (*ev_cmd) return cmd_evaluate(ev, out);
  } catch (const ConfigError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ContractViolation& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDataError;
  }
  return kExitUsage;
}

}  // namespace embnmt::cli
