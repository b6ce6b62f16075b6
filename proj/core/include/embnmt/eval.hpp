#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>

#include "embnmt/embeddings.hpp"
#include "embnmt/vocab.hpp"

namespace embnmt {

struct BleuStats {
  static constexpr std::size_t kMaxOrder = 4;
  std::array<std::size_t, kMaxOrder> matched{};
  std::array<std::size_t, kMaxOrder> total{};
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
  std::size_t max_n = kMaxOrder;

  double precision(std::size_t n) const;  // 1-based order
  double brevity_penalty() const;
};

// Clipped n-gram counts summed over the corpus.
BleuStats bleu_stats(std::span<const Sentence> hypotheses, std::span<const Sentence> references,
                     std::size_t max_n = 4);

// Percentage in [0, 100]. Without smoothing any zero precision gives 0.
// add_one_smoothing adds one to matched and total counts of orders n > 1.
double bleu_from_stats(const BleuStats& stats, bool add_one_smoothing = false);
double corpus_bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references,
                   std::size_t max_n = 4, bool add_one_smoothing = false);

// Fraction of hypothesis tokens equal to "<unk>"; 0 for an empty corpus.
double unk_rate(std::span<const Sentence> hypotheses);

struct NearMissResult {
  double accuracy = 1.0;
  std::size_t mismatches = 0;
  std::size_t hits = 0;
  bool no_mismatches() const { return mismatches == 0; }
};

// Over positionally aligned tokens that differ (up to the shorter length,
// special tokens in the reference skipped), the fraction whose hypothesis word
// is among the k nearest vocabulary neighbours of the reference word. A
// hypothesis "<unk>" or out-of-vocabulary word never counts as a hit.
NearMissResult near_miss_accuracy(std::span<const Sentence> hypotheses, std::span<const Sentence> references,
                                  const EmbeddingStore& store, const Vocabulary& target_vocab, std::size_t k = 5);

struct EvalReport {
  std::size_t sentences = 0;
  double bleu = 0.0;
  double unk_rate = 0.0;
  std::optional<NearMissResult> near_miss;

  // "key value" lines in the order: sentences, bleu, unk_rate,
  // near_miss_accuracy, near_miss_mismatches. Near-miss lines are omitted
  // when absent.
  std::string to_text() const;
  // Same keys as one tab-separated line of values; "NA" for absent near-miss.
  std::string to_record() const;
  static std::string record_header();
};

EvalReport evaluate(std::span<const Sentence> hypotheses, std::span<const Sentence> references,
                    const EmbeddingStore* store = nullptr, const Vocabulary* target_vocab = nullptr,
                    std::size_t k = 5, bool add_one_smoothing = false);

}  // namespace embnmt
