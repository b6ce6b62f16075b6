#include "embnmt/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <shared_mutex>

#include "embnmt/corpus.hpp"
#include "embnmt/errors.hpp"

namespace embnmt {

const std::vector<double>* RawEmbeddings::find(std::string_view word) const {
  auto it = index.find(std::string(word));
  return it == index.end() ? nullptr : &vectors[it->second];
}

namespace {

template <class T>
bool parse_number(std::string_view text, T& out) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

RawEmbeddings parse_text_embeddings(std::istream& in) {
  RawEmbeddings raw;
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing embedding header", 1);
  const Sentence header = split_tokens(line);
  std::size_t count = 0;
  if (header.size() != 2 || !parse_number(header[0], count) || !parse_number(header[1], raw.dim) || raw.dim == 0) {
    throw FormatError("embedding header must be '<count> <dim>'", 1);
  }
  std::size_t lineno = 1;
  std::size_t entries = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const Sentence fields = split_tokens(line);
    if (fields.empty()) continue;
    if (fields.size() != raw.dim + 1) {
      throw FormatError("expected " + std::to_string(raw.dim) + " values for '" + fields[0] + "', got " +
                            std::to_string(fields.size() - 1),
                        lineno);
    }
    std::vector<double> v(raw.dim);
    for (std::size_t i = 0; i < raw.dim; ++i) {
      if (!parse_number(fields[i + 1], v[i]) || !std::isfinite(v[i])) {
        throw FormatError("non-numeric value '" + fields[i + 1] + "'", lineno);
      }
    }
    ++entries;
    if (raw.index.count(fields[0])) {
      ++raw.duplicates;
      continue;
    }
    raw.index.emplace(fields[0], raw.words.size());
    raw.words.push_back(fields[0]);
    raw.vectors.push_back(std::move(v));
  }
  if (entries != count) {
    throw FormatError("header declares " + std::to_string(count) + " vectors but file has " + std::to_string(entries),
                      lineno);
  }
  return raw;
}

RawEmbeddings load_text_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read embeddings " + path.string());
  return parse_text_embeddings(in);
}

double distance(std::span<const double> s, std::span<const double> t) {
  if (s.size() != t.size()) {
    throw ContractViolation("distance: dimension mismatch " + std::to_string(s.size()) + " vs " +
                            std::to_string(t.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = s[i] - t[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

struct EmbeddingStore::Cache {
  std::shared_mutex mutex;
  std::unordered_map<std::int64_t, std::shared_ptr<const DistanceRow>> rows;
};

EmbeddingStore::EmbeddingStore(std::size_t vocab_size, std::size_t dim, std::vector<double> matrix, double coverage,
                               std::vector<std::string> extra_words, std::vector<double> extra_matrix)
    : vocab_size_(vocab_size),
      dim_(dim),
      matrix_(std::move(matrix)),
      coverage_(coverage),
      extra_words_(std::move(extra_words)),
      extra_matrix_(std::move(extra_matrix)),
      cache_(std::make_unique<Cache>()) {
  if (matrix_.size() != vocab_size_ * dim_ || extra_matrix_.size() != extra_words_.size() * dim_) {
    throw ContractViolation("embedding store: matrix size does not match vocab_size x dim");
  }
  for (double v : matrix_) {
    if (!std::isfinite(v)) throw ContractViolation("embedding store: non-finite entry");
  }
  for (std::size_t i = 0; i < extra_words_.size(); ++i) {
    extra_keys_.emplace(extra_words_[i], static_cast<std::int64_t>(vocab_size_ + i));
  }
}

EmbeddingStore::EmbeddingStore(EmbeddingStore&&) noexcept = default;
EmbeddingStore& EmbeddingStore::operator=(EmbeddingStore&&) noexcept = default;
EmbeddingStore::~EmbeddingStore() = default;

std::span<const double> EmbeddingStore::row(WordId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= vocab_size_) {
    throw std::out_of_range("embedding row " + std::to_string(id) + " out of range for vocabulary of size " +
                            std::to_string(vocab_size_));
  }
  return {matrix_.data() + static_cast<std::size_t>(id) * dim_, dim_};
}

std::span<const double> EmbeddingStore::reference_vector(std::int64_t key) const {
  if (key >= 0 && static_cast<std::size_t>(key) < vocab_size_) return row(static_cast<WordId>(key));
  const auto extra = static_cast<std::size_t>(key) - vocab_size_;
  if (key < 0 || extra >= extra_words_.size()) {
    throw std::out_of_range("embedding reference key " + std::to_string(key) + " out of range");
  }
  return {extra_matrix_.data() + extra * dim_, dim_};
}

std::int64_t EmbeddingStore::reference_key(const Vocabulary& vocab, std::string_view word) const {
  if (vocab.contains(word)) return vocab.id_of(word);
  auto it = extra_keys_.find(std::string(word));
  return it == extra_keys_.end() ? kUnk : it->second;
}

std::shared_ptr<const DistanceRow> EmbeddingStore::distance_row(std::int64_t ref_key) const {
  {
    std::shared_lock lock(cache_->mutex);
    auto it = cache_->rows.find(ref_key);
    if (it != cache_->rows.end()) return it->second;
  }
  const auto ref = reference_vector(ref_key);
  auto row_ptr = std::make_shared<DistanceRow>();
  row_ptr->ref_key = ref_key;
  row_ptr->distances.resize(vocab_size_);
  for (std::size_t k = 0; k < vocab_size_; ++k) {
    row_ptr->distances[k] = distance(row(static_cast<WordId>(k)), ref);
  }
  std::unique_lock lock(cache_->mutex);
  return cache_->rows.try_emplace(ref_key, std::move(row_ptr)).first->second;
}

std::vector<WordId> EmbeddingStore::nearest_neighbors(std::int64_t ref_key, std::size_t k) const {
  const auto row_ptr = distance_row(ref_key);
  std::vector<WordId> candidates;
  for (std::size_t id = kNumSpecials; id < vocab_size_; ++id) {
    if (static_cast<std::int64_t>(id) != ref_key) candidates.push_back(static_cast<WordId>(id));
  }
  const auto& d = row_ptr->distances;
  const auto closer = [&](WordId a, WordId b) {
    return d[static_cast<std::size_t>(a)] != d[static_cast<std::size_t>(b)]
               ? d[static_cast<std::size_t>(a)] < d[static_cast<std::size_t>(b)]
               : a < b;
  };
  const std::size_t take = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(),
                    closer);
  candidates.resize(take);
  return candidates;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<double> random_direction(std::uint64_t seed, std::size_t dim) {
  std::mt19937_64 rng(seed);
  std::vector<double> v(dim);
  double norm = 0.0;
  while (norm == 0.0) {
    for (auto& x : v) {
      // Box-Muller keeps the draw independent of the standard library's distributions.
      const double u1 = 1.0 - uniform01(rng);
      const double u2 = uniform01(rng);
      x = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
    norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  }
  for (auto& x : v) x /= norm;
  return v;
}

}  // namespace

EmbeddingStore align_to_vocab(const RawEmbeddings& raw, const Vocabulary& vocab, std::uint64_t seed) {
  if (raw.size() == 0) throw ContractViolation("align_to_vocab: embedding table is empty");
  const std::size_t dim = raw.dim;
  const std::size_t n = vocab.size();
  std::vector<double> matrix(n * dim, 0.0);
  std::vector<bool> found(n, false);
  std::vector<double> mean(dim, 0.0);
  double mean_norm = 0.0;
  std::size_t found_count = 0;
  for (std::size_t id = kNumSpecials; id < n; ++id) {
    const auto* v = raw.find(vocab.word_of(static_cast<WordId>(id)));
    if (!v) continue;
    std::copy(v->begin(), v->end(), matrix.begin() + static_cast<std::ptrdiff_t>(id * dim));
    found[id] = true;
    ++found_count;
    for (std::size_t i = 0; i < dim; ++i) mean[i] += (*v)[i];
    mean_norm += std::sqrt(std::inner_product(v->begin(), v->end(), v->begin(), 0.0));
  }
  if (found_count > 0) {
    for (auto& x : mean) x /= static_cast<double>(found_count);
    mean_norm /= static_cast<double>(found_count);
  } else {
    // Nothing in the vocabulary is covered; fall back to the file's geometry.
    for (const auto& v : raw.vectors) {
      for (std::size_t i = 0; i < dim; ++i) mean[i] += v[i];
      mean_norm += std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    }
    for (auto& x : mean) x /= static_cast<double>(raw.size());
    mean_norm /= static_cast<double>(raw.size());
  }
  for (std::size_t id = 0; id < n; ++id) {
    if (found[id]) continue;
    double* dst = matrix.data() + id * dim;
    if (static_cast<WordId>(id) == kUnk) {
      std::copy(mean.begin(), mean.end(), dst);
      continue;
    }
    const auto dir = random_direction(seed ^ fnv1a(vocab.word_of(static_cast<WordId>(id))), dim);
    for (std::size_t i = 0; i < dim; ++i) dst[i] = dir[i] * mean_norm;
  }
  const std::size_t corpus_words = n - kNumSpecials;
  const double coverage = corpus_words == 0 ? 0.0 : static_cast<double>(found_count) / static_cast<double>(corpus_words);

  Vocabulary specials;
  std::vector<std::string> extra_words;
  std::vector<double> extra_matrix;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (vocab.contains(raw.words[i]) || specials.contains(raw.words[i])) continue;
    extra_words.push_back(raw.words[i]);
    extra_matrix.insert(extra_matrix.end(), raw.vectors[i].begin(), raw.vectors[i].end());
  }
  return EmbeddingStore(n, dim, std::move(matrix), coverage, std::move(extra_words), std::move(extra_matrix));
}

}  // namespace embnmt
