#include "embnmt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "embnmt/errors.hpp"

namespace embnmt {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const Sentence& s, std::size_t n) {
  NgramCounts counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    ++counts[std::vector<std::string>(s.begin() + static_cast<std::ptrdiff_t>(i),
                                      s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

bool is_special_surface(const std::string& w) {
  return w == "<pad>" || w == "<s>" || w == "</s>";
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double BleuStats::precision(std::size_t n) const {
  if (n < 1 || n > max_n) throw ContractViolation("BleuStats::precision: order out of range");
  return total[n - 1] ? static_cast<double>(matched[n - 1]) / static_cast<double>(total[n - 1]) : 0.0;
}

double BleuStats::brevity_penalty() const {
  if (hyp_length >= ref_length) return 1.0;
  if (hyp_length == 0) return 0.0;
  return std::exp(1.0 - static_cast<double>(ref_length) / static_cast<double>(hyp_length));
}

BleuStats bleu_stats(std::span<const Sentence> hypotheses, std::span<const Sentence> references, std::size_t max_n) {
  if (hypotheses.size() != references.size()) {
    throw StructuralError("bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                          std::to_string(references.size()) + " references");
  }
  if (max_n < 1 || max_n > BleuStats::kMaxOrder) throw ContractViolation("bleu: max_n must be in [1, 4]");
  BleuStats stats;
  stats.max_n = max_n;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    stats.hyp_length += hypotheses[s].size();
    stats.ref_length += references[s].size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      const NgramCounts hyp = count_ngrams(hypotheses[s], n);
      const NgramCounts ref = count_ngrams(references[s], n);
      for (const auto& [gram, count] : hyp) {
        const auto it = ref.find(gram);
        stats.matched[n - 1] += it == ref.end() ? 0 : std::min(count, it->second);
        stats.total[n - 1] += count;
      }
    }
  }
  return stats;
}

double bleu_from_stats(const BleuStats& stats, bool add_one_smoothing) {
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= stats.max_n; ++n) {
    double m = static_cast<double>(stats.matched[n - 1]);
    double t = static_cast<double>(stats.total[n - 1]);
    if (add_one_smoothing && n > 1) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double score = 100.0 * stats.brevity_penalty() * std::exp(log_sum / static_cast<double>(stats.max_n));
  return std::clamp(score, 0.0, 100.0);
}

double corpus_bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references, std::size_t max_n,
                   bool add_one_smoothing) {
  return bleu_from_stats(bleu_stats(hypotheses, references, max_n), add_one_smoothing);
}

double unk_rate(std::span<const Sentence> hypotheses) {
  std::size_t unk = 0, total = 0;
  for (const auto& s : hypotheses) {
    total += s.size();
    unk += static_cast<std::size_t>(std::count(s.begin(), s.end(), kUnkSurface));
  }
  return total ? static_cast<double>(unk) / static_cast<double>(total) : 0.0;
}

NearMissResult near_miss_accuracy(std::span<const Sentence> hypotheses, std::span<const Sentence> references,
                                  const EmbeddingStore& store, const Vocabulary& target_vocab, std::size_t k) {
  if (hypotheses.size() != references.size()) {
    throw StructuralError("near_miss_accuracy: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                          std::to_string(references.size()) + " references");
  }
  NearMissResult result;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& hyp = hypotheses[s];
    const auto& ref = references[s];
    const std::size_t len = std::min(hyp.size(), ref.size());
    for (std::size_t i = 0; i < len; ++i) {
      if (hyp[i] == ref[i] || is_special_surface(ref[i])) continue;
      ++result.mismatches;
      if (hyp[i] == kUnkSurface || !target_vocab.contains(hyp[i])) continue;
      const WordId hyp_id = target_vocab.id_of(hyp[i]);
      const auto neighbours = store.nearest_neighbors(store.reference_key(target_vocab, ref[i]), k);
      if (std::find(neighbours.begin(), neighbours.end(), hyp_id) != neighbours.end()) ++result.hits;
    }
  }
  result.accuracy =
      result.mismatches ? static_cast<double>(result.hits) / static_cast<double>(result.mismatches) : 1.0;
  return result;
}

std::string EvalReport::to_text() const {
  std::string out = "sentences " + std::to_string(sentences) + "\n";
  out += "bleu " + fmt(bleu) + "\n";
  out += "unk_rate " + fmt(unk_rate) + "\n";
  if (near_miss) {
    out += "near_miss_accuracy " + fmt(near_miss->accuracy) + "\n";
    out += "near_miss_mismatches " + std::to_string(near_miss->mismatches) + "\n";
  }
  return out;
}

std::string EvalReport::record_header() {
  return "sentences\tbleu\tunk_rate\tnear_miss_accuracy\tnear_miss_mismatches";
}

std::string EvalReport::to_record() const {
  std::string out = std::to_string(sentences) + "\t" + fmt(bleu) + "\t" + fmt(unk_rate) + "\t";
  if (near_miss) {
    out += fmt(near_miss->accuracy) + "\t" + std::to_string(near_miss->mismatches);
  } else {
    out += "NA\tNA";
  }
  return out;
}

EvalReport evaluate(std::span<const Sentence> hypotheses, std::span<const Sentence> references,
                    const EmbeddingStore* store, const Vocabulary* target_vocab, std::size_t k,
                    bool add_one_smoothing) {
  EvalReport report;
  report.sentences = hypotheses.size();
  report.bleu = corpus_bleu(hypotheses, references, 4, add_one_smoothing);
  report.unk_rate = unk_rate(hypotheses);
  if (store && target_vocab) report.near_miss = near_miss_accuracy(hypotheses, references, *store, *target_vocab, k);
  return report;
}

}  // namespace embnmt
