#include "embnmt/loss.hpp"

#include <atomic>
#include <iostream>

#include "embnmt/errors.hpp"

namespace embnmt {

using ad::Tensor;
using ad::Var;

namespace {
constexpr double kProbFloor = 1e-12;
}

std::string to_string(LossPhase phase) {
  switch (phase) {
    case LossPhase::kEnt: return "ent";
    case LossPhase::kEmb: return "emb";
    case LossPhase::kCombined: return "ent+emb";
  }
  return "?";
}

LossPhase parse_loss_phase(const std::string& text) {
  if (text == "ent") return LossPhase::kEnt;
  if (text == "emb") return LossPhase::kEmb;
  if (text == "ent+emb") return LossPhase::kCombined;
  throw StructuralError("unknown loss phase '" + text + "'");
}

DecoderTargets decoder_targets(const Batch& batch) {
  const std::size_t rows = batch.target_ids.rows;
  const std::size_t steps = batch.target_ids.cols == 0 ? 0 : batch.target_ids.cols - 1;
  DecoderTargets t;
  t.ids = Grid<WordId>(rows, steps);
  t.mask = Grid<std::uint8_t>(rows, steps);
  t.ref_keys = Grid<std::int64_t>(rows, steps);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t s = 0; s < steps; ++s) {
      t.ids(r, s) = batch.target_ids(r, s + 1);
      t.mask(r, s) = batch.target_mask(r, s + 1);
      t.ref_keys(r, s) = t.ids(r, s);
    }
  }
  return t;
}

void resolve_oov_references(DecoderTargets& targets, const Batch& batch, const EmbeddingStore& store,
                            const Vocabulary& target_vocab) {
  for (const OovPosition& p : batch.target_oov) {
    if (p.col == 0 || p.col > targets.steps()) continue;
    targets.ref_keys(p.row, p.col - 1) = store.reference_key(target_vocab, p.word);
  }
}

namespace {

void check_probs(std::span<const Var> probs, std::size_t rows, std::size_t steps, const char* who) {
  if (probs.size() != steps) {
    throw ContractViolation(std::string(who) + ": " + std::to_string(probs.size()) + " probability steps for " +
                            std::to_string(steps) + " target steps");
  }
  for (const Var& p : probs) {
    if (p.value().rows() != rows) {
      throw ContractViolation(std::string(who) + ": probability rows " + ad::to_string(p.shape()) +
                              " do not match batch of " + std::to_string(rows));
    }
  }
}

}  // namespace

Var cross_entropy_loss(std::span<const Var> probs, const Grid<WordId>& ids, const Grid<std::uint8_t>& mask) {
  check_probs(probs, ids.rows, ids.cols, "cross_entropy_loss");
  if (probs.empty()) throw ContractViolation("cross_entropy_loss: no steps");
  ad::Tape& tape = probs[0].tape();
  Var total;
  bool clamped = false;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    const Tensor& p = probs[t].value();
    Tensor pick(p.rows(), p.cols());
    Tensor weight(p.rows(), 1);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      const WordId id = ids(r, t);
      if (id < 0 || static_cast<std::size_t>(id) >= p.cols()) {
        throw ContractViolation("cross_entropy_loss: reference id " + std::to_string(id) + " out of range");
      }
      pick(r, static_cast<std::size_t>(id)) = 1.0;
      weight(r, 0) = mask(r, t);
      if (mask(r, t) && p(r, static_cast<std::size_t>(id)) < kProbFloor) clamped = true;
    }
    Var ref_prob = ad::row_sum(ad::mul(probs[t], tape.constant(std::move(pick))));
    Var step = ad::sum(ad::mul(ad::log(ref_prob, kProbFloor), tape.constant(std::move(weight))));
    total = total.valid() ? ad::add(total, step) : step;
  }
  static std::atomic<bool> warned{false};
  if (clamped && tape.checked() && !warned.exchange(true)) {
    std::clog << "warning: reference probability below " << kProbFloor << " clamped in cross-entropy\n";
  }
  return ad::scale(total, -1.0);
}

Var embedding_loss(std::span<const Var> probs, const Grid<std::int64_t>& ref_keys, const Grid<std::uint8_t>& mask,
                   const EmbeddingStore& store) {
  check_probs(probs, ref_keys.rows, ref_keys.cols, "embedding_loss");
  if (probs.empty()) throw ContractViolation("embedding_loss: no steps");
  ad::Tape& tape = probs[0].tape();
  Var total;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    const Tensor& p = probs[t].value();
    if (p.cols() != store.vocab_size()) {
      throw ContractViolation("embedding_loss: probability width " + std::to_string(p.cols()) +
                              " does not match embedding vocabulary " + std::to_string(store.vocab_size()));
    }
    Tensor dist(p.rows(), p.cols());
    for (std::size_t r = 0; r < p.rows(); ++r) {
      if (!mask(r, t)) continue;
      const auto row = store.distance_row(ref_keys(r, t));
      std::copy(row->distances.begin(), row->distances.end(), &dist(r, 0));
    }
    Var step = ad::sum(ad::mul(probs[t], tape.constant(std::move(dist))));
    total = total.valid() ? ad::add(total, step) : step;
  }
  return total;
}

CombinedLoss combined_loss(std::span<const Var> probs, const DecoderTargets& targets, const EmbeddingStore* store,
                           LossPhase phase, double lambda) {
  if (phase != LossPhase::kEnt && store == nullptr) {
    throw ConfigError("loss phase '" + to_string(phase) + "' requires an embedding store");
  }
  const std::size_t rows = targets.rows();
  if (rows == 0) throw ContractViolation("combined_loss: empty batch");
  const double per_sentence = 1.0 / static_cast<double>(rows);

  CombinedLoss out;
  out.breakdown.sentences = rows;
  for (auto m : targets.mask.data) out.breakdown.token_count += m;

  Var ent = ad::scale(cross_entropy_loss(probs, targets.ids, targets.mask), per_sentence);
  out.breakdown.ent_component = ent.value().item();
  Var emb;
  if (store) {
    emb = ad::scale(embedding_loss(probs, targets.ref_keys, targets.mask, *store), per_sentence);
    out.breakdown.emb_component = emb.value().item();
  }
  switch (phase) {
    case LossPhase::kEnt: out.total = ent; break;
    case LossPhase::kEmb: out.total = emb; break;
    case LossPhase::kCombined: out.total = ad::add(ent, ad::scale(emb, lambda)); break;
  }
  out.breakdown.total = out.total.value().item();
  return out;
}

}  // namespace embnmt
