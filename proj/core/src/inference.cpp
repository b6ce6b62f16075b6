#include "embnmt/inference.hpp"

#include <algorithm>
#include <cmath>

#include "embnmt/errors.hpp"

namespace embnmt {

using ad::Var;

double normalized_score(const Hypothesis& h, double alpha) {
  if (alpha == 0.0 || h.length() == 0) return h.log_prob;
  return h.log_prob / std::pow(static_cast<double>(h.length()), alpha);
}

namespace {

struct Decoder {
  ad::Tape tape{{.record = false, .checked = true}};
  BoundModel model;
  EncoderOutput encoded;

  Decoder(const ModelParams& params, std::span<const WordId> source_ids) : model(params, tape) {
    if (source_ids.empty()) throw ContractViolation("decode: empty source sentence");
    const Batch b = make_source_batch({source_ids.begin(), source_ids.end()});
    encoded = model.encode(b.source_ids, b.source_mask);
  }

  // Log-probabilities of the next word plus the advanced state.
  std::pair<std::vector<double>, DecoderState> step(const DecoderState& state, WordId prev) {
    const WordId words[1] = {prev};
    DecoderStepOutput out = model.decoder_step(state, words, encoded);
    const auto probs = model.output_distribution(out.attentional).value().row(0);
    std::vector<double> logp(probs.size());
    for (std::size_t k = 0; k < probs.size(); ++k) logp[k] = std::log(probs[k]);
    return {std::move(logp), std::move(out.state)};
  }
};

}  // namespace

std::vector<WordId> greedy_decode(const ModelParams& params, std::span<const WordId> source_ids, std::size_t max_len) {
  if (max_len < 1) throw ContractViolation("greedy_decode: max_len must be >= 1");
  Decoder dec(params, source_ids);
  DecoderState state = dec.model.initial_state(dec.encoded);
  std::vector<WordId> out;
  WordId prev = kBos;
  while (out.size() < max_len) {
    auto [logp, next] = dec.step(state, prev);
    // max_element returns the first maximum, i.e. the smaller id on ties.
    prev = static_cast<WordId>(std::max_element(logp.begin(), logp.end()) - logp.begin());
    out.push_back(prev);
    state = std::move(next);
    if (prev == kEos) break;
  }
  return out;
}

Hypothesis beam_search(const ModelParams& params, std::span<const WordId> source_ids, std::size_t beam_width,
                       std::size_t max_len, double length_norm_alpha) {
  if (beam_width < 1) throw ContractViolation("beam_search: beam_width must be >= 1");
  if (max_len < 1) throw ContractViolation("beam_search: max_len must be >= 1");
  Decoder dec(params, source_ids);

  struct Live {
    Hypothesis hyp;
    DecoderState state;
  };
  struct Candidate {
    double total;
    double step_logp;
    std::size_t parent;
    WordId word;
  };
  std::vector<Live> beam{{{{kBos}, 0.0, false}, dec.model.initial_state(dec.encoded)}};
  std::vector<Hypothesis> finished;

  for (std::size_t len = 0; len < max_len && !beam.empty(); ++len) {
    std::vector<Candidate> candidates;
    std::vector<DecoderState> next_states;
    for (std::size_t b = 0; b < beam.size(); ++b) {
      auto [logp, next] = dec.step(beam[b].state, beam[b].hyp.ids.back());
      next_states.push_back(std::move(next));
      for (std::size_t k = 0; k < logp.size(); ++k) {
        candidates.push_back({beam[b].hyp.log_prob + logp[k], logp[k], b, static_cast<WordId>(k)});
      }
    }
    const std::size_t keep = std::min(beam_width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.total != b.total) return a.total > b.total;
                        if (a.step_logp != b.step_logp) return a.step_logp > b.step_logp;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.word < b.word;
                      });
    std::vector<Live> next_beam;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = candidates[i];
      Hypothesis h = beam[c.parent].hyp;
      h.ids.push_back(c.word);
      h.log_prob = c.total;
      if (c.word == kEos || len + 1 == max_len) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next_beam.push_back({std::move(h), next_states[c.parent]});
      }
    }
    beam = std::move(next_beam);
  }

  const Hypothesis* best = nullptr;
  for (const auto& h : finished) {
    if (!best || normalized_score(h, length_norm_alpha) > normalized_score(*best, length_norm_alpha)) best = &h;
  }
  return *best;
}

Sentence translate_sentence(const ModelParams& params, const Vocabulary& source_vocab, const Vocabulary& target_vocab,
                            const Sentence& source, const DecodeOptions& options) {
  if (source.empty()) return {};
  const std::vector<WordId> ids = source_vocab.encode(source);
  const std::size_t max_len = options.max_len ? options.max_len : 2 * source.size() + 10;
  if (options.beam_width <= 1 && options.length_norm_alpha == 0.0) {
    return target_vocab.decode_ids(greedy_decode(params, ids, max_len));
  }
  const Hypothesis h = beam_search(params, ids, std::max<std::size_t>(1, options.beam_width), max_len,
                                   options.length_norm_alpha);
  return target_vocab.decode_ids(h.ids);
}

}  // namespace embnmt
