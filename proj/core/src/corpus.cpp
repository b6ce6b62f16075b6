#include "embnmt/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include "embnmt/errors.hpp"

namespace embnmt {

std::vector<Sentence> ParallelCorpus::sources() const {
  std::vector<Sentence> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.source);
  return out;
}

std::vector<Sentence> ParallelCorpus::targets() const {
  std::vector<Sentence> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.target);
  return out;
}

Sentence split_tokens(const std::string& line) {
  Sentence tokens;
  std::size_t i = 0;
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; };
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    if (j > i) tokens.emplace_back(line, i, j - i);
    i = j;
  }
  return tokens;
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(std::move(line));
  if (in.bad()) throw IoError("failed reading " + path.string());
  return lines;
}

}  // namespace

ParallelCorpus load_parallel(const std::filesystem::path& source_path, const std::filesystem::path& target_path,
                             LoadReport* report) {
  const auto src = read_lines(source_path);
  const auto tgt = read_lines(target_path);
  if (src.size() != tgt.size()) {
    throw StructuralError("line count mismatch " + std::to_string(src.size()) + " vs " + std::to_string(tgt.size()) +
                          " (" + source_path.string() + ", " + target_path.string() + ")");
  }
  ParallelCorpus corpus;
  corpus.name = source_path.stem().string();
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    SentencePair pair{split_tokens(src[i]), split_tokens(tgt[i])};
    if (pair.source.empty() || pair.target.empty()) {
      ++dropped;
      continue;
    }
    corpus.pairs.push_back(std::move(pair));
  }
  if (report) *report = {src.size(), dropped};
  return corpus;
}

void save_side(const std::filesystem::path& path, const std::vector<Sentence>& sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out << ' ';
      out << s[i];
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

ParallelCorpus filter_by_length(const ParallelCorpus& corpus, std::size_t max_tokens) {
  if (max_tokens < 1) throw ContractViolation("filter_by_length: max_tokens must be >= 1");
  ParallelCorpus out;
  out.name = corpus.name;
  for (const auto& p : corpus.pairs) {
    if (p.source.size() <= max_tokens && p.target.size() <= max_tokens) out.pairs.push_back(p);
  }
  return out;
}

namespace {

Batch build_batch(const ParallelCorpus& corpus, std::span<const std::size_t> members, const Vocabulary& vocab_src,
                  const Vocabulary& vocab_tgt) {
  std::size_t src_len = 0;
  std::size_t tgt_len = 0;
  for (std::size_t m : members) {
    src_len = std::max(src_len, corpus.pairs[m].source.size());
    tgt_len = std::max(tgt_len, corpus.pairs[m].target.size() + 2);
  }
  Batch b;
  b.source_ids = Grid<WordId>(members.size(), src_len, kPad);
  b.source_mask = Grid<std::uint8_t>(members.size(), src_len, 0);
  b.target_ids = Grid<WordId>(members.size(), tgt_len, kPad);
  b.target_mask = Grid<std::uint8_t>(members.size(), tgt_len, 0);
  for (std::size_t r = 0; r < members.size(); ++r) {
    const SentencePair& p = corpus.pairs[members[r]];
    for (std::size_t j = 0; j < p.source.size(); ++j) {
      b.source_ids(r, j) = vocab_src.id_of(p.source[j]);
      b.source_mask(r, j) = 1;
    }
    b.target_ids(r, 0) = kBos;
    b.target_mask(r, 0) = 1;
    for (std::size_t j = 0; j < p.target.size(); ++j) {
      const WordId id = vocab_tgt.id_of(p.target[j]);
      b.target_ids(r, j + 1) = id;
      b.target_mask(r, j + 1) = 1;
      if (id == kUnk && !vocab_tgt.contains(p.target[j])) b.target_oov.push_back({r, j + 1, p.target[j]});
    }
    b.target_ids(r, p.target.size() + 1) = kEos;
    b.target_mask(r, p.target.size() + 1) = 1;
  }
  return b;
}

}  // namespace

std::vector<Batch> make_batches(const ParallelCorpus& corpus, const Vocabulary& vocab_src, const Vocabulary& vocab_tgt,
                                std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size < 1) throw ContractViolation("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corpus.pairs[a].target.size() < corpus.pairs[b].target.size();
  });
  std::vector<Batch> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    batches.push_back(build_batch(corpus, std::span(order).subspan(begin, end - begin), vocab_src, vocab_tgt));
  }
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    for (std::size_t i = batches.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(batches[i - 1], batches[j]);
    }
  }
  return batches;
}

Batch make_source_batch(const std::vector<WordId>& source_ids) {
  Batch b;
  b.source_ids = Grid<WordId>(1, source_ids.size());
  b.source_mask = Grid<std::uint8_t>(1, source_ids.size(), 1);
  b.source_ids.data = source_ids;
  return b;
}

}  // namespace embnmt
