#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "embnmt/embeddings.hpp"
#include "embnmt/errors.hpp"
#include "embnmt/toy_corpus.hpp"

using namespace embnmt;

namespace {

// Cluster index encoded in a toy target word "t<c>_<j>".
std::size_t cluster_of(const std::string& w) { return std::stoul(w.substr(1, w.find('_') - 1)); }

}  // namespace

TEST(ToyCorpus, SameSeedIsByteIdentical) {
  ToyCorpusSpec spec;
  spec.train_size = 300;
  const ToyCorpus a = generate_toy_corpus(spec, 9), b = generate_toy_corpus(spec, 9);
  EXPECT_EQ(a.train.pairs, b.train.pairs);
  EXPECT_EQ(a.valid.pairs, b.valid.pairs);
  EXPECT_EQ(a.test.pairs, b.test.pairs);
  EXPECT_EQ(a.embeddings_text, b.embeddings_text);
  EXPECT_NE(generate_toy_corpus(spec, 10).train.pairs, a.train.pairs);
}

TEST(ToyCorpus, SplitSizesAndLengths) {
  ToyCorpusSpec spec;
  const ToyCorpus toy = generate_toy_corpus(spec, 1);
  EXPECT_EQ(toy.train.size(), 2000u);
  EXPECT_EQ(toy.valid.size(), 200u);
  EXPECT_EQ(toy.test.size(), 200u);
  for (const auto& p : toy.train.pairs) {
    EXPECT_EQ(p.source.size(), p.target.size());
    EXPECT_GE(p.source.size(), spec.min_len);
    EXPECT_LE(p.source.size(), spec.max_len);
  }
}

TEST(ToyCorpus, ThirtyContentWordsForTenClustersOfThree) {
  const ToyCorpus toy = generate_toy_corpus(ToyCorpusSpec{}, 1);
  std::set<std::string> words;
  for (const auto& s : toy.train.targets()) words.insert(s.begin(), s.end());
  EXPECT_EQ(words.size(), 30u);
  EXPECT_EQ(build_vocab(toy.train.targets(), 1000).size(), 34u);
}

TEST(ToyCorpus, TranslationIsAPositionalWordMap) {
  const ToyCorpus toy = generate_toy_corpus(ToyCorpusSpec{}, 2);
  std::map<std::string, std::string> mapping;
  for (const auto& p : toy.train.pairs) {
    for (std::size_t i = 0; i < p.source.size(); ++i) {
      auto [it, fresh] = mapping.emplace(p.source[i], p.target[i]);
      EXPECT_EQ(it->second, p.target[i]);
    }
  }
}

TEST(ToyCorpus, LastSynonymIsRarest) {
  const ToyCorpus toy = generate_toy_corpus(ToyCorpusSpec{}, 4);
  std::map<std::string, std::size_t> counts;
  for (const auto& s : toy.train.targets())
    for (const auto& w : s) ++counts[w];
  for (std::size_t c = 0; c < 10; ++c) {
    EXPECT_GT(counts[toy_target_word(c, 0)], counts[toy_target_word(c, 2)]);
    EXPECT_GT(counts[toy_target_word(c, 1)], counts[toy_target_word(c, 2)]);
  }
  // Truncating to 24 entries drops exactly one synonym per cluster.
  const Vocabulary v = build_vocab(toy.train.targets(), 24);
  for (std::size_t c = 0; c < 10; ++c) EXPECT_FALSE(v.contains(toy_target_word(c, 2))) << c;
}

TEST(ToyCorpus, IntraClusterDistancesBelowInterClusterDistances) {
  for (std::uint64_t seed : {1u, 2u, 3u, 17u}) {
    ToyCorpusSpec spec;
    spec.train_size = 10;
    const ToyCorpus toy = generate_toy_corpus(spec, seed);
    std::istringstream in(toy.embeddings_text);
    const RawEmbeddings raw = parse_text_embeddings(in);
    ASSERT_EQ(raw.size(), 30u);
    double max_intra = 0.0, min_inter = 1e300;
    for (std::size_t a = 0; a < raw.size(); ++a) {
      for (std::size_t b = a + 1; b < raw.size(); ++b) {
        double s = 0.0;
        for (std::size_t k = 0; k < raw.dim; ++k) s += (raw.vectors[a][k] - raw.vectors[b][k]) * (raw.vectors[a][k] - raw.vectors[b][k]);
        const double d = std::sqrt(s);
        if (cluster_of(raw.words[a]) == cluster_of(raw.words[b])) max_intra = std::max(max_intra, d);
        else min_inter = std::min(min_inter, d);
      }
    }
    EXPECT_LT(max_intra, min_inter) << "seed " << seed;
  }
}

TEST(ToyCorpus, InvalidSpecRejected) {
  ToyCorpusSpec spec;
  spec.cluster_size = 0;
  EXPECT_THROW(generate_toy_corpus(spec, 1), ConfigError);
  spec = {};
  spec.max_len = 1;
  EXPECT_THROW(spec.validate(), ConfigError);
}
