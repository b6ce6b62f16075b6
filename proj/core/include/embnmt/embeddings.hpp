#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "embnmt/vocab.hpp"

namespace embnmt {

// Word vectors as read from a textual "<count> <dim>" export, in file order.
struct RawEmbeddings {
  std::size_t dim = 0;
  std::vector<std::string> words;
  std::vector<std::vector<double>> vectors;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t duplicates = 0;

  std::size_t size() const { return words.size(); }
  const std::vector<double>* find(std::string_view word) const;
};

RawEmbeddings parse_text_embeddings(std::istream& in);
RawEmbeddings load_text_embeddings(const std::filesystem::path& path);

double distance(std::span<const double> s, std::span<const double> t);

// Distances from one reference vector to every vocabulary row.
struct DistanceRow {
  std::int64_t ref_key = 0;
  std::vector<double> distances;
};

// Frozen embedding table aligned to a target vocabulary. Words from the source
// file that are not in the vocabulary are kept as extra reference rows with
// keys >= vocab_size, so OOV reference words keep their own geometry.
class EmbeddingStore {
 public:
  EmbeddingStore(std::size_t vocab_size, std::size_t dim, std::vector<double> matrix,
                 double coverage, std::vector<std::string> extra_words,
                 std::vector<double> extra_matrix);
  EmbeddingStore(EmbeddingStore&&) noexcept;
  EmbeddingStore& operator=(EmbeddingStore&&) noexcept;
  ~EmbeddingStore();

  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t dim() const { return dim_; }
  double coverage() const { return coverage_; }
  std::size_t extra_count() const { return extra_words_.size(); }

  std::span<const double> row(WordId id) const;
  // Vector for a reference key: a vocabulary id or an extra key.
  std::span<const double> reference_vector(std::int64_t key) const;

  // Key used as the reference for a surface word: its vocabulary id when in
  // vocabulary, else its extra key when the file had it, else UNK.
  std::int64_t reference_key(const Vocabulary& vocab, std::string_view word) const;

  // Cached; concurrent callers observe identical values.
  std::shared_ptr<const DistanceRow> distance_row(std::int64_t ref_key) const;

  // k closest non-special vocabulary ids (excluding the reference itself),
  // ascending distance, ties to the smaller id.
  std::vector<WordId> nearest_neighbors(std::int64_t ref_key, std::size_t k) const;

 private:
  struct Cache;

  std::size_t vocab_size_;
  std::size_t dim_;
  std::vector<double> matrix_;
  double coverage_;
  std::vector<std::string> extra_words_;
  std::vector<double> extra_matrix_;
  std::unordered_map<std::string, std::int64_t> extra_keys_;
  std::unique_ptr<Cache> cache_;
};

// Rows of in-file words are copied verbatim. Missing words (and PAD, BOS, EOS)
// get a per-word seeded random vector scaled to the mean norm of found rows;
// UNK gets the mean of found rows.
EmbeddingStore align_to_vocab(const RawEmbeddings& raw, const Vocabulary& vocab, std::uint64_t seed);

}  // namespace embnmt
