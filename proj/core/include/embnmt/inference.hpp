#pragma once

#include <span>
#include <vector>

#include "embnmt/model.hpp"
#include "embnmt/vocab.hpp"

namespace embnmt {

struct Hypothesis {
  // BOS-prefixed.
  std::vector<WordId> ids;
  double log_prob = 0.0;
  // EOS emitted or length limit reached.
  bool finished = false;

  // Generated length, not counting BOS.
  std::size_t length() const { return ids.empty() ? 0 : ids.size() - 1; }
};

// log_prob / length^alpha; alpha = 0 gives the raw log-probability.
double normalized_score(const Hypothesis& h, double alpha);

// Emits the most probable word at each step (ties to the smaller id) until EOS
// or max_len words. The returned ids exclude BOS and include EOS when emitted.
std::vector<WordId> greedy_decode(const ModelParams& params, std::span<const WordId> source_ids, std::size_t max_len);

// Keeps the beam_width best prefixes by cumulative log-probability; finished
// hypotheses leave the beam and the best by normalized_score is returned.
// beam_width = 1 with alpha = 0 reproduces greedy_decode.
Hypothesis beam_search(const ModelParams& params, std::span<const WordId> source_ids, std::size_t beam_width,
                       std::size_t max_len, double length_norm_alpha = 0.0);

struct DecodeOptions {
  std::size_t beam_width = 0;  // 0 or 1: greedy
  // 0 means 2 * source length + 10.
  std::size_t max_len = 0;
  double length_norm_alpha = 0.0;
};

// Surface translation of one tokenized sentence; "<unk>" is kept as-is.
Sentence translate_sentence(const ModelParams& params, const Vocabulary& source_vocab,
                            const Vocabulary& target_vocab, const Sentence& source, const DecodeOptions& options = {});

}  // namespace embnmt
