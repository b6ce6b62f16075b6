#pragma once

#include <cstdint>
#include <string>

#include "embnmt/corpus.hpp"

namespace embnmt {

// Synthetic parallel task: every target content word belongs to a synonym
// cluster and every source word translates to exactly one target word. Within
// a cluster the first synonym is the most frequent and the last the rarest, so
// frequency truncation of the target vocabulary removes the rare synonyms first.
struct ToyCorpusSpec {
  std::size_t clusters = 10;
  std::size_t cluster_size = 3;
  std::size_t min_len = 3;
  std::size_t max_len = 8;
  std::size_t train_size = 2000;
  std::size_t valid_size = 200;
  std::size_t test_size = 200;
  std::size_t embed_dim = 16;

  void validate() const;
};

struct ToyCorpus {
  ParallelCorpus train;
  ParallelCorpus valid;
  ParallelCorpus test;
  // Textual "<count> <dim>" embedding file covering every target content word.
  std::string embeddings_text;
};

std::string toy_source_word(std::size_t cluster, std::size_t synonym);
std::string toy_target_word(std::size_t cluster, std::size_t synonym);

ToyCorpus generate_toy_corpus(const ToyCorpusSpec& spec, std::uint64_t seed);

}  // namespace embnmt
