#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "embnmt/vocab.hpp"

namespace embnmt {

struct SentencePair {
  Sentence source;
  Sentence target;

  bool operator==(const SentencePair&) const = default;
};

struct ParallelCorpus {
  std::string name;
  std::vector<SentencePair> pairs;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }

  std::vector<Sentence> sources() const;
  std::vector<Sentence> targets() const;
};

// Row-major 2-D grid of small integers (ids or mask bits).
template <class T>
struct Grid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(std::size_t r, std::size_t c, T fill = T{}) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool operator==(const Grid&) const = default;
};

// A target position whose surface word fell out of the vocabulary.
struct OovPosition {
  std::size_t row = 0;
  std::size_t col = 0;
  std::string word;

  bool operator==(const OovPosition&) const = default;
};

// Source rows are raw token ids; target rows are BOS w1 .. wn EOS. Masks are 1 on
// real tokens and 0 on padding.
struct Batch {
  Grid<WordId> source_ids;
  Grid<std::uint8_t> source_mask;
  Grid<WordId> target_ids;
  Grid<std::uint8_t> target_mask;
  std::vector<OovPosition> target_oov;

  std::size_t size() const { return source_ids.rows; }

  bool operator==(const Batch&) const = default;
};

struct LoadReport {
  std::size_t lines = 0;
  std::size_t dropped_empty = 0;
};

Sentence split_tokens(const std::string& line);

ParallelCorpus load_parallel(const std::filesystem::path& source_path,
                             const std::filesystem::path& target_path,
                             LoadReport* report = nullptr);

void save_side(const std::filesystem::path& path, const std::vector<Sentence>& sentences);

// Keeps pairs whose source and target both have at most max_tokens tokens.
ParallelCorpus filter_by_length(const ParallelCorpus& corpus, std::size_t max_tokens);

// Pairs are stably sorted by target length and chunked; with a seed the batch
// order is then shuffled.
std::vector<Batch> make_batches(const ParallelCorpus& corpus, const Vocabulary& vocab_src,
                                const Vocabulary& vocab_tgt, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed = std::nullopt);

// Single-sentence source batch, as used by decoding.
Batch make_source_batch(const std::vector<WordId>& source_ids);

}  // namespace embnmt
