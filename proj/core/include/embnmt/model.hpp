#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "embnmt/autodiff.hpp"
#include "embnmt/corpus.hpp"

namespace embnmt {

struct ModelConfig {
  std::size_t source_vocab = 0;
  std::size_t target_vocab = 0;
  std::size_t embed_dim = 512;
  std::size_t hidden_dim = 512;
  std::size_t layers = 2;

  bool operator==(const ModelConfig&) const = default;
};

// Trainable weights of the attentional encoder-decoder, addressed by ParamId.
//
//   src_embed [S x E], tgt_embed [T x E]
//   enc_fwd.<l>.{W,U,b}, enc_bwd.<l>.{W,U,b}   LSTM stacks, gates i|f|g|o
//   attn_proj [2H x H]                          source vectors -> attention keys
//   dec.<l>.{W,U,b}                             layer 0 input is [embedding ; feed]
//   W_c [H x 3H]                                d~ = tanh(W_c [c ; d])
//   W_s [T x H]                                 p = softmax(W_s d~)
class ModelParams {
 public:
  // Every entry drawn from uniform(-0.08, 0.08).
  ModelParams(const ModelConfig& config, std::uint64_t seed);

  // Validates names and shapes against the layout implied by `config`.
  static ModelParams from_tensors(const ModelConfig& config, std::vector<std::pair<std::string, ad::Tensor>> tensors);

  const ModelConfig& config() const { return config_; }
  std::size_t count() const { return tensors_.size(); }
  const std::string& name(ad::ParamId id) const { return names_[id]; }
  ad::Tensor& tensor(ad::ParamId id) { return tensors_[id]; }
  const ad::Tensor& tensor(ad::ParamId id) const { return tensors_[id]; }
  ad::ParamId id(std::string_view name) const;
  std::size_t scalar_count() const;

  bool all_finite() const;
  bool operator==(const ModelParams& other) const { return config_ == other.config_ && tensors_ == other.tensors_; }

 private:
  ModelParams() = default;
  void add(std::string name, std::size_t rows, std::size_t cols);

  ModelConfig config_;
  std::vector<std::string> names_;
  std::vector<ad::Tensor> tensors_;
};

// Seeded keep-masks for inverted dropout. With p == 0 it is the identity.
class DropoutContext {
 public:
  DropoutContext(double p, std::uint64_t seed);
  ad::Var apply(ad::Var x);
  double rate() const { return p_; }

 private:
  double p_;
  std::mt19937_64 rng_;
};

struct EncoderOutput {
  // Per source position: h_j = [fwd_j ; bwd_j], [B x 2H].
  std::vector<ad::Var> source_vectors;
  // Per source position: h_j projected to decoder width, [B x H].
  std::vector<ad::Var> keys;
  // Additive attention bias [B x J]: 0 on real positions, -1e30 on padding.
  ad::Var score_bias;
  // Projected h_J, [B x H].
  ad::Var final_state;
};

struct DecoderState {
  std::vector<ad::Var> hidden;
  std::vector<ad::Var> cell;
  // Previous attentional vector d~; zeros at step 0.
  ad::Var feed;
  std::size_t step = 0;
};

struct DecoderStepOutput {
  DecoderState state;
  ad::Var attentional;  // d~_i
  ad::Var attention;    // alpha_i
};

// Softmax of dot scores d^T k_j over unpadded positions.
ad::Var attention_weights(ad::Var decoder_hidden, const EncoderOutput& encoded);

// sum_j alpha_j h_j.
ad::Var context(ad::Var alpha, const EncoderOutput& encoded);

// Model parameters placed on a tape for one forward computation.
class BoundModel {
 public:
  BoundModel(const ModelParams& params, ad::Tape& tape);

  const ModelConfig& config() const { return params_.config(); }
  ad::Tape& tape() const { return tape_; }
  ad::Var param(std::string_view name) const;

  EncoderOutput encode(const Grid<WordId>& source_ids, const Grid<std::uint8_t>& source_mask,
                       DropoutContext* dropout = nullptr) const;

  DecoderState initial_state(const EncoderOutput& encoded) const;

  DecoderStepOutput decoder_step(const DecoderState& state, std::span<const WordId> prev_words,
                                 const EncoderOutput& encoded, DropoutContext* dropout = nullptr) const;

  ad::Var output_logits(ad::Var attentional, DropoutContext* dropout = nullptr) const;
  ad::Var output_distribution(ad::Var attentional, DropoutContext* dropout = nullptr) const;

  // Teacher-forced output distributions; element t predicts target column t + 1.
  std::vector<ad::Var> teacher_forced_logits(const Batch& batch, DropoutContext* dropout = nullptr) const;

 private:
  struct LstmLayer {
    ad::Var w, u, b;
  };
  std::pair<ad::Var, ad::Var> lstm_cell(const LstmLayer& layer, ad::Var x, ad::Var h, ad::Var c) const;

  const ModelParams& params_;
  ad::Tape& tape_;
  std::vector<ad::Var> vars_;
  std::vector<LstmLayer> enc_fwd_, enc_bwd_, dec_;
};

}  // namespace embnmt
