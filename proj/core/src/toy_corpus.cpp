#include "embnmt/toy_corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include "embnmt/embeddings.hpp"
#include "embnmt/errors.hpp"

namespace embnmt {

void ToyCorpusSpec::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("toy corpus spec: ") + what);
  };
  require(clusters >= 1, "clusters must be >= 1");
  require(cluster_size >= 1, "cluster_size must be >= 1");
  require(min_len >= 1, "min_len must be >= 1");
  require(max_len >= min_len, "max_len must be >= min_len");
  require(train_size >= 1, "train_size must be >= 1");
  require(embed_dim >= 1, "embed_dim must be >= 1");
}

std::string toy_source_word(std::size_t cluster, std::size_t synonym) {
  return "s" + std::to_string(cluster) + "_" + std::to_string(synonym);
}

std::string toy_target_word(std::size_t cluster, std::size_t synonym) {
  return "t" + std::to_string(cluster) + "_" + std::to_string(synonym);
}

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

double gaussian(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

ParallelCorpus sample_split(const ToyCorpusSpec& spec, std::size_t count, const char* name, std::mt19937_64& rng) {
  // Synonym j of a cluster is drawn with weight (cluster_size - j).
  const double total_weight = static_cast<double>(spec.cluster_size * (spec.cluster_size + 1)) / 2.0;
  ParallelCorpus corpus;
  corpus.name = name;
  corpus.pairs.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const std::size_t len = spec.min_len + uniform_index(rng, spec.max_len - spec.min_len + 1);
    SentencePair pair;
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t c = uniform_index(rng, spec.clusters);
      double u = uniform01(rng) * total_weight;
      std::size_t j = 0;
      while (j + 1 < spec.cluster_size && u >= static_cast<double>(spec.cluster_size - j)) {
        u -= static_cast<double>(spec.cluster_size - j);
        ++j;
      }
      pair.source.push_back(toy_source_word(c, j));
      pair.target.push_back(toy_target_word(c, j));
    }
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

constexpr double kMemberRadius = 0.5;
constexpr double kMinCenterGap = 2.5;

std::string sample_embeddings(const ToyCorpusSpec& spec, std::mt19937_64& rng) {
  // Members lie exactly kMemberRadius from their center, so intra-cluster
  // distances are <= 2r = 1 while centers at least 2.5 apart keep
  // inter-cluster distances >= 1.5.
  std::vector<std::vector<double>> centers;
  const double spread = 2.0 * std::sqrt(static_cast<double>(spec.clusters));
  for (int attempt = 0;; ++attempt) {
    if (attempt == 1000) throw ConfigError("toy corpus spec: embed_dim too small to separate clusters");
    centers.assign(spec.clusters, std::vector<double>(spec.embed_dim));
    for (auto& c : centers)
      for (auto& x : c) x = spread * gaussian(rng);
    bool separated = true;
    for (std::size_t a = 0; a < centers.size() && separated; ++a)
      for (std::size_t b = a + 1; b < centers.size() && separated; ++b)
        separated = distance(centers[a], centers[b]) >= kMinCenterGap;
    if (separated) break;
  }
  std::ostringstream out;
  out << spec.clusters * spec.cluster_size << ' ' << spec.embed_dim << '\n';
  char buf[64];
  for (std::size_t c = 0; c < spec.clusters; ++c) {
    for (std::size_t j = 0; j < spec.cluster_size; ++j) {
      std::vector<double> dir(spec.embed_dim);
      double norm = 0.0;
      while (norm == 0.0) {
        for (auto& x : dir) x = gaussian(rng);
        norm = std::sqrt(std::inner_product(dir.begin(), dir.end(), dir.begin(), 0.0));
      }
      out << toy_target_word(c, j);
      for (std::size_t i = 0; i < spec.embed_dim; ++i) {
        std::snprintf(buf, sizeof buf, " %.6f", centers[c][i] + kMemberRadius * dir[i] / norm);
        out << buf;
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace

ToyCorpus generate_toy_corpus(const ToyCorpusSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 text_rng(seed);
  std::mt19937_64 embed_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  ToyCorpus out;
  out.train = sample_split(spec, spec.train_size, "train", text_rng);
  out.valid = sample_split(spec, spec.valid_size, "valid", text_rng);
  out.test = sample_split(spec, spec.test_size, "test", text_rng);
  out.embeddings_text = sample_embeddings(spec, embed_rng);
  return out;
}

}  // namespace embnmt
