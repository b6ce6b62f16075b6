#include "embnmt/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "embnmt/errors.hpp"

namespace embnmt {

using ad::Tensor;
using ad::Var;

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("train config: " + what);
  };
  require(learning_rate > 0, "learning rate must be positive");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, "Adam betas must be in [0, 1)");
  require(epsilon > 0, "Adam epsilon must be positive");
  require(grad_clip > 0, "gradient clip must be positive");
  require(weight_decay >= 0, "weight decay must be non-negative");
  require(dropout >= 0 && dropout < 1, "dropout must be in [0, 1)");
  require(lr_decay_factor > 0 && lr_decay_factor <= 1, "lr decay factor must be in (0, 1]");
  require(lambda >= 0, "lambda must be non-negative");
  require(batch_size >= 1 && embed_dim >= 1 && hidden_dim >= 1 && layers >= 1, "dimensions must be positive");
}

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kEntOnly: return "ent";
    case StrategyKind::kCombined: return "combined";
    case StrategyKind::kCombinedAfterEntPretrain: return "combined-after-ent";
    case StrategyKind::kEmbAfterEntPretrain: return "emb-after-ent";
    case StrategyKind::kEmbFromScratch: return "emb-scratch";
  }
  return "?";
}

StrategyKind parse_strategy(const std::string& text) {
  for (auto k : {StrategyKind::kEntOnly, StrategyKind::kCombined, StrategyKind::kCombinedAfterEntPretrain,
                 StrategyKind::kEmbAfterEntPretrain, StrategyKind::kEmbFromScratch}) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown strategy '" + text + "'");
}

bool TrainingStrategy::has_pretrain() const {
  return kind == StrategyKind::kCombinedAfterEntPretrain || kind == StrategyKind::kEmbAfterEntPretrain;
}

bool TrainingStrategy::needs_embeddings() const { return kind != StrategyKind::kEntOnly; }

LossPhase TrainingStrategy::main_phase() const {
  switch (kind) {
    case StrategyKind::kEntOnly: return LossPhase::kEnt;
    case StrategyKind::kCombined:
    case StrategyKind::kCombinedAfterEntPretrain: return LossPhase::kCombined;
    case StrategyKind::kEmbAfterEntPretrain:
    case StrategyKind::kEmbFromScratch: return LossPhase::kEmb;
  }
  return LossPhase::kEnt;
}

void TrainingStrategy::validate(const EmbeddingStore* store) const {
  if (needs_embeddings() && store == nullptr) {
    throw ConfigError("strategy '" + to_string(kind) + "' requires word embeddings");
  }
  if (kind == StrategyKind::kEmbFromScratch && !allow_emb_from_scratch) {
    throw ConfigError("strategy 'emb-scratch' must be enabled explicitly");
  }
  if (pretrain_epochs && *pretrain_epochs == 0) throw ConfigError("pretrain epochs must be positive");
}

// ---------------------------------------------------------------------------

AdamState make_adam_state(const ModelParams& params) {
  AdamState s;
  for (ad::ParamId id = 0; id < params.count(); ++id) {
    const auto shape = params.tensor(id).shape();
    s.m.emplace_back(shape.rows, shape.cols);
    s.v.emplace_back(shape.rows, shape.cols);
  }
  return s;
}

void adam_step(ModelParams& params, const ad::GradientMap& grads, AdamState& state, const TrainConfig& config,
               double lr) {
  if (state.m.size() != params.count()) throw ContractViolation("adam_step: optimizer state does not match model");
  for (ad::ParamId id = 0; id < params.count(); ++id) {
    auto it = grads.find(id);
    if (it == grads.end() || it->second.shape() != params.tensor(id).shape()) {
      throw ContractViolation("adam_step: missing or misshaped gradient for '" + params.name(id) + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(config.beta1, t);
  const double correct2 = 1.0 - std::pow(config.beta2, t);
  for (ad::ParamId id = 0; id < params.count(); ++id) {
    auto p = params.tensor(id).data();
    auto g = grads.at(id).data();
    auto m = state.m[id].data();
    auto v = state.v[id].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
      p[i] -= lr * config.weight_decay * p[i];
    }
  }
}

double global_norm(const ad::GradientMap& grads) {
  // Sum in key order so the result does not depend on hash-map iteration.
  std::vector<ad::ParamId> keys;
  for (const auto& [id, g] : grads) keys.push_back(id);
  std::sort(keys.begin(), keys.end());
  double sq = 0.0;
  for (auto id : keys)
    for (double v : grads.at(id).data()) sq += v * v;
  return std::sqrt(sq);
}

double clip_gradients(ad::GradientMap& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [id, g] : grads)
      for (double& v : g.data()) v *= s;
  }
  return norm;
}

double lr_decay_on_plateau(std::span<const double> history, double lr, double factor) {
  if (history.size() < 2) return lr;
  return history[history.size() - 1] > history[history.size() - 2] ? lr * factor : lr;
}

// ---------------------------------------------------------------------------

std::vector<PreparedBatch> prepare_batches(std::vector<Batch> batches, const EmbeddingStore* store,
                                           const Vocabulary& target_vocab) {
  std::vector<PreparedBatch> out;
  out.reserve(batches.size());
  for (auto& b : batches) {
    DecoderTargets targets = decoder_targets(b);
    if (store) resolve_oov_references(targets, b, *store, target_vocab);
    out.push_back({std::move(b), std::move(targets)});
  }
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<Var> softmax_all(const std::vector<Var>& logits) {
  std::vector<Var> probs;
  probs.reserve(logits.size());
  for (const Var& l : logits) probs.push_back(ad::softmax(l));
  return probs;
}

struct Accumulator {
  LossBreakdown sum;

  void add(const LossBreakdown& b) {
    const auto n = static_cast<double>(b.sentences);
    sum.total += b.total * n;
    sum.ent_component += b.ent_component * n;
    sum.emb_component += b.emb_component * n;
    sum.token_count += b.token_count;
    sum.sentences += b.sentences;
  }

  LossBreakdown mean() const {
    LossBreakdown m = sum;
    if (m.sentences > 0) {
      const auto n = static_cast<double>(m.sentences);
      m.total /= n;
      m.ent_component /= n;
      m.emb_component /= n;
    }
    return m;
  }
};

bool all_finite(const ad::GradientMap& grads) {
  return std::all_of(grads.begin(), grads.end(), [](const auto& kv) { return kv.second.all_finite(); });
}

}  // namespace

LossBreakdown train_epoch(ModelParams& params, AdamState& adam, std::span<const PreparedBatch> batches,
                          const TrainConfig& config, LossPhase phase, const EmbeddingStore* store, double lr,
                          std::size_t epoch, const StepObserver& on_step) {
  Accumulator acc;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const PreparedBatch& pb = batches[i];
    ad::GradientMap grads;
    try {
      ad::Tape tape;
      BoundModel model(params, tape);
      DropoutContext dropout(config.dropout, splitmix64(config.seed ^ splitmix64(epoch * 1000003ULL + i)));
      const auto probs = softmax_all(model.teacher_forced_logits(pb.batch, &dropout));
      CombinedLoss loss = combined_loss(probs, pb.targets, store, phase, config.lambda);
      if (!std::isfinite(loss.breakdown.total)) throw std::domain_error("non-finite loss");
      grads = tape.backward(loss.total);
      acc.add(loss.breakdown);
    } catch (const std::domain_error& e) {
      throw TrainingError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(i) + ": " + e.what());
    }
    if (!all_finite(grads)) {
      throw TrainingError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(i) +
                          ": non-finite gradient");
    }
    const double norm = clip_gradients(grads, config.grad_clip);
    if (on_step) on_step({epoch, i, norm, global_norm(grads)});
    adam_step(params, grads, adam, config, lr);
  }
  return acc.mean();
}

LossBreakdown evaluate_loss(const ModelParams& params, std::span<const PreparedBatch> batches, LossPhase phase,
                            const EmbeddingStore* store, double lambda) {
  Accumulator acc;
  for (const PreparedBatch& pb : batches) {
    ad::Tape tape({.record = false, .checked = true});
    BoundModel model(params, tape);
    const auto probs = softmax_all(model.teacher_forced_logits(pb.batch));
    acc.add(combined_loss(probs, pb.targets, store, phase, lambda).breakdown);
  }
  return acc.mean();
}

// ---------------------------------------------------------------------------

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("bad number '" + s + "' in log", line);
  return v;
}

}  // namespace

std::string format_log_row(const EpochLogRow& row) {
  std::string out = std::to_string(row.epoch);
  for (const std::string& f :
       {to_string(row.phase), fmt_double(row.train.total), fmt_double(row.train.ent_component),
        fmt_double(row.train.emb_component), fmt_double(row.valid.total), fmt_double(row.valid.ent_component),
        fmt_double(row.valid.emb_component), fmt_double(row.lr)}) {
    out += '\t';
    out += f;
  }
  return out;
}

void write_training_log(std::ostream& out, std::span<const EpochLogRow> rows, const std::string& header) {
  std::istringstream lines(header);
  std::string line;
  while (std::getline(lines, line)) out << "# " << line << '\n';
  out << "# epoch\tphase\ttrain_total\ttrain_ent\ttrain_emb\tvalid_total\tvalid_ent\tvalid_emb\tlr\n";
  for (const auto& r : rows) out << format_log_row(r) << '\n';
}

std::vector<EpochLogRow> parse_training_log(std::istream& in) {
  std::vector<EpochLogRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 9) throw FormatError("expected 9 tab-separated fields", lineno);
    EpochLogRow r;
    r.epoch = static_cast<std::size_t>(parse_double(fields[0], lineno));
    try {
      r.phase = parse_loss_phase(fields[1]);
    } catch (const StructuralError&) {
      throw FormatError("unknown phase '" + fields[1] + "'", lineno);
    }
    r.train.total = parse_double(fields[2], lineno);
    r.train.ent_component = parse_double(fields[3], lineno);
    r.train.emb_component = parse_double(fields[4], lineno);
    r.valid.total = parse_double(fields[5], lineno);
    r.valid.ent_component = parse_double(fields[6], lineno);
    r.valid.emb_component = parse_double(fields[7], lineno);
    r.lr = parse_double(fields[8], lineno);
    rows.push_back(r);
  }
  return rows;
}

std::size_t select_best_epoch(std::span<const EpochLogRow> log) {
  if (log.empty()) throw ContractViolation("select_best_epoch: empty log");
  const LossPhase final_phase = log.back().phase;
  std::size_t first = log.size() - 1;
  while (first > 0 && log[first - 1].phase == final_phase) --first;
  std::size_t best = first;
  for (std::size_t i = first + 1; i < log.size(); ++i) {
    if (log[i].valid.total < log[best].valid.total) best = i;
  }
  return best;
}

RunResult run_strategy(const ModelParams& initial, std::span<const PreparedBatch> train,
                       std::span<const PreparedBatch> valid, const TrainConfig& config,
                       const TrainingStrategy& strategy, const EmbeddingStore* store, const EpochCallback& on_epoch,
                       const StepObserver& on_step) {
  config.validate();
  strategy.validate(store);
  if (valid.empty()) throw ConfigError("validation data is empty");
  if (config.max_epochs == 0) throw ConfigError("max_epochs must be positive");

  ModelParams params = initial;
  AdamState adam = make_adam_state(params);
  double lr = config.learning_rate;
  LossPhase phase = strategy.has_pretrain() ? LossPhase::kEnt : strategy.main_phase();
  bool pretraining = strategy.has_pretrain();
  std::size_t pretrain_done = 0;
  std::vector<double> history;

  RunResult result{params, adam, {}, {}};
  bool have_best = false;

  std::vector<std::size_t> order(train.size());
  std::vector<PreparedBatch> epoch_batches;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(splitmix64(config.seed) ^ epoch);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    epoch_batches.clear();
    for (auto idx : order) epoch_batches.push_back(train[idx]);

    const LossBreakdown train_loss = train_epoch(params, adam, epoch_batches, config, phase, store, lr, epoch, on_step);
    const LossBreakdown valid_loss = evaluate_loss(params, valid, phase, store, config.lambda);
    history.push_back(valid_loss.total);
    lr = lr_decay_on_plateau(history, lr, config.lr_decay_factor);

    EpochLogRow row{epoch, phase, train_loss, valid_loss, lr};
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);

    if (!have_best || valid_loss.total < result.best_meta.valid_loss) {
      have_best = true;
      result.best = params;
      result.best_adam = adam;
      result.best_meta = {epoch, valid_loss.total, lr, phase, {}};
    }

    if (pretraining) {
      ++pretrain_done;
      const bool plateau = history.size() >= 2 && !(history.back() < history[history.size() - 2]);
      const bool done = strategy.pretrain_epochs ? pretrain_done >= *strategy.pretrain_epochs : plateau;
      if (done) {
        pretraining = false;
        phase = strategy.main_phase();
        history.clear();
        have_best = false;
      }
    }
  }
  return result;
}

}  // namespace embnmt
