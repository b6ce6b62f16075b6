#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "embnmt/autodiff.hpp"
#include "embnmt/corpus.hpp"
#include "embnmt/embeddings.hpp"

namespace embnmt {

// Which objective drives the gradient.
enum class LossPhase { kEnt, kEmb, kCombined };

std::string to_string(LossPhase phase);
LossPhase parse_loss_phase(const std::string& text);

// Per-sentence averages over a batch (or an epoch).
struct LossBreakdown {
  double total = 0.0;
  double ent_component = 0.0;
  double emb_component = 0.0;
  std::size_t token_count = 0;
  std::size_t sentences = 0;
};

// Decoder-aligned targets: column t is what decoder output t must predict.
struct DecoderTargets {
  Grid<WordId> ids;
  Grid<std::uint8_t> mask;
  // Embedding reference per position. Equals ids, except that OOV reference
  // words covered by the embedding file point at their own vector.
  Grid<std::int64_t> ref_keys;

  std::size_t rows() const { return ids.rows; }
  std::size_t steps() const { return ids.cols; }
};

DecoderTargets decoder_targets(const Batch& batch);

// Points OOV positions at the reference word's own embedding when the store has it.
void resolve_oov_references(DecoderTargets& targets, const Batch& batch, const EmbeddingStore& store,
                            const Vocabulary& target_vocab);

// -sum over unpadded positions of log p(reference), summed over the batch.
// probs[t] is [rows x vocab]. Reference probabilities are clamped at 1e-12.
ad::Var cross_entropy_loss(std::span<const ad::Var> probs, const Grid<WordId>& ids, const Grid<std::uint8_t>& mask);

// sum over unpadded positions i of sum_k p(V_k) d(E(V_k), E(y_i)), summed over
// the batch. Distances are constants; gradients flow through probs only.
ad::Var embedding_loss(std::span<const ad::Var> probs, const Grid<std::int64_t>& ref_keys,
                       const Grid<std::uint8_t>& mask, const EmbeddingStore& store);

struct CombinedLoss {
  ad::Var total;
  LossBreakdown breakdown;
};

// ENT: total = l_ent; EMB: total = l_emb; COMBINED: total = l_ent + lambda * l_emb.
// Both components are reported whenever a store is available (l_emb reads 0
// without one). Sums are divided by the number of sentences in the batch.
CombinedLoss combined_loss(std::span<const ad::Var> probs, const DecoderTargets& targets,
                           const EmbeddingStore* store, LossPhase phase, double lambda = 1.0);

}  // namespace embnmt
