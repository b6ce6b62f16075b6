#include "embnmt/model.hpp"

#include <algorithm>

#include "embnmt/errors.hpp"

namespace embnmt {

using ad::Tensor;
using ad::Var;

namespace {

constexpr double kInitRange = 0.08;
constexpr double kMaskedScore = -1e30;

std::string layer_name(const char* stack, std::size_t layer, const char* part) {
  return std::string(stack) + "." + std::to_string(layer) + "." + part;
}

}  // namespace

void ModelParams::add(std::string name, std::size_t rows, std::size_t cols) {
  names_.push_back(std::move(name));
  tensors_.emplace_back(rows, cols);
}

ModelParams::ModelParams(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  if (config.source_vocab == 0 || config.target_vocab == 0 || config.embed_dim == 0 || config.hidden_dim == 0 ||
      config.layers == 0) {
    throw ContractViolation("model config dimensions must all be positive");
  }
  const std::size_t e = config.embed_dim, h = config.hidden_dim;
  add("src_embed", config.source_vocab, e);
  add("tgt_embed", config.target_vocab, e);
  for (const char* stack : {"enc_fwd", "enc_bwd"}) {
    for (std::size_t l = 0; l < config.layers; ++l) {
      add(layer_name(stack, l, "W"), l == 0 ? e : h, 4 * h);
      add(layer_name(stack, l, "U"), h, 4 * h);
      add(layer_name(stack, l, "b"), 1, 4 * h);
    }
  }
  add("attn_proj", 2 * h, h);
  for (std::size_t l = 0; l < config.layers; ++l) {
    add(layer_name("dec", l, "W"), l == 0 ? e + h : h, 4 * h);
    add(layer_name("dec", l, "U"), h, 4 * h);
    add(layer_name("dec", l, "b"), 1, 4 * h);
  }
  add("W_c", h, 3 * h);
  add("W_s", config.target_vocab, h);

  std::mt19937_64 rng(seed);
  for (auto& t : tensors_) {
    for (double& v : t.data()) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      v = (2.0 * u - 1.0) * kInitRange;
    }
  }
}

ModelParams ModelParams::from_tensors(const ModelConfig& config,
                                      std::vector<std::pair<std::string, Tensor>> tensors) {
  ModelParams layout(config, 0);
  if (tensors.size() != layout.count()) {
    throw IntegrityError("expected " + std::to_string(layout.count()) + " parameter tensors, got " +
                         std::to_string(tensors.size()));
  }
  ModelParams out;
  out.config_ = config;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& [name, t] = tensors[i];
    if (name != layout.names_[i] || t.shape() != layout.tensors_[i].shape()) {
      throw IntegrityError("parameter '" + name + "' " + ad::to_string(t.shape()) + " does not match expected '" +
                           layout.names_[i] + "' " + ad::to_string(layout.tensors_[i].shape()));
    }
    out.names_.push_back(std::move(name));
    out.tensors_.push_back(std::move(t));
  }
  return out;
}

ad::ParamId ModelParams::id(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw ContractViolation("unknown parameter '" + std::string(name) + "'");
  return static_cast<ad::ParamId>(it - names_.begin());
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

bool ModelParams::all_finite() const {
  return std::all_of(tensors_.begin(), tensors_.end(), [](const Tensor& t) { return t.all_finite(); });
}

// ---------------------------------------------------------------------------

DropoutContext::DropoutContext(double p, std::uint64_t seed) : p_(p), rng_(seed) {
  if (!(p >= 0.0 && p < 1.0)) throw ContractViolation("dropout rate must be in [0, 1)");
}

Var DropoutContext::apply(Var x) {
  if (p_ == 0.0) return x;
  Tensor mask(x.value().rows(), x.value().cols());
  for (double& m : mask.data()) {
    const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    m = u >= p_ ? 1.0 : 0.0;
  }
  return ad::dropout(x, mask, p_);
}

namespace {
Var maybe_dropout(DropoutContext* dropout, Var x) { return dropout ? dropout->apply(x) : x; }
}  // namespace

// ---------------------------------------------------------------------------

Var attention_weights(Var decoder_hidden, const EncoderOutput& encoded) {
  std::vector<Var> scores;
  scores.reserve(encoded.keys.size());
  for (const Var& key : encoded.keys) scores.push_back(ad::row_sum(ad::mul(decoder_hidden, key)));
  return ad::softmax(ad::add(ad::concat(scores), encoded.score_bias));
}

Var context(Var alpha, const EncoderOutput& encoded) {
  Var c;
  for (std::size_t j = 0; j < encoded.source_vectors.size(); ++j) {
    Var term = ad::mul(ad::slice(alpha, j, j + 1), encoded.source_vectors[j]);
    c = c.valid() ? ad::add(c, term) : term;
  }
  return c;
}

// ---------------------------------------------------------------------------

BoundModel::BoundModel(const ModelParams& params, ad::Tape& tape) : params_(params), tape_(tape) {
  vars_.reserve(params.count());
  for (ad::ParamId id = 0; id < params.count(); ++id) vars_.push_back(tape.parameter(id, params.tensor(id)));
  const auto bind_stack = [&](const char* stack, std::vector<LstmLayer>& layers) {
    for (std::size_t l = 0; l < params.config().layers; ++l) {
      layers.push_back({param(layer_name(stack, l, "W")), param(layer_name(stack, l, "U")),
                        param(layer_name(stack, l, "b"))});
    }
  };
  bind_stack("enc_fwd", enc_fwd_);
  bind_stack("enc_bwd", enc_bwd_);
  bind_stack("dec", dec_);
}

Var BoundModel::param(std::string_view name) const { return vars_[params_.id(name)]; }

std::pair<Var, Var> BoundModel::lstm_cell(const LstmLayer& layer, Var x, Var h, Var c) const {
  const std::size_t hd = config().hidden_dim;
  Var gates = ad::add(ad::add(ad::matmul(x, layer.w), ad::matmul(h, layer.u)), layer.b);
  Var i = ad::sigmoid(ad::slice(gates, 0, hd));
  Var f = ad::sigmoid(ad::slice(gates, hd, 2 * hd));
  Var g = ad::tanh(ad::slice(gates, 2 * hd, 3 * hd));
  Var o = ad::sigmoid(ad::slice(gates, 3 * hd, 4 * hd));
  Var c_next = ad::add(ad::mul(f, c), ad::mul(i, g));
  Var h_next = ad::mul(o, ad::tanh(c_next));
  return {h_next, c_next};
}

EncoderOutput BoundModel::encode(const Grid<WordId>& source_ids, const Grid<std::uint8_t>& source_mask,
                                 DropoutContext* dropout) const {
  const std::size_t rows = source_ids.rows, len = source_ids.cols;
  const std::size_t hd = config().hidden_dim;
  if (source_mask.rows != rows || source_mask.cols != len) throw ContractViolation("encode: mask shape mismatch");
  if (len == 0) throw ContractViolation("encode: empty source batch");
  std::vector<std::size_t> lengths(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < len; ++j) lengths[r] += source_mask(r, j);
    if (lengths[r] == 0) throw ContractViolation("encode: source row " + std::to_string(r) + " is all padding");
  }
  for (WordId id : source_ids.data) {
    if (id < 0 || static_cast<std::size_t>(id) >= config().source_vocab) {
      throw ContractViolation("encode: source id " + std::to_string(id) + " out of range");
    }
  }

  // Column masks: keep[j] selects the new state on real tokens, hold[j] carries the old one.
  std::vector<Var> keep(len), hold(len);
  for (std::size_t j = 0; j < len; ++j) {
    Tensor k(rows, 1), h(rows, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      k(r, 0) = source_mask(r, j);
      h(r, 0) = 1.0 - source_mask(r, j);
    }
    keep[j] = tape_.constant(std::move(k));
    hold[j] = tape_.constant(std::move(h));
  }

  Var src_embed = param("src_embed");
  std::vector<Var> inputs(len);
  std::vector<WordId> column(rows);
  for (std::size_t j = 0; j < len; ++j) {
    for (std::size_t r = 0; r < rows; ++r) column[r] = source_ids(r, j);
    inputs[j] = maybe_dropout(dropout, ad::embedding_lookup(src_embed, column));
  }

  const Var zeros = tape_.constant(Tensor(rows, hd));
  const auto run_stack = [&](const std::vector<LstmLayer>& stack, bool reverse) {
    std::vector<Var> layer_in = inputs;
    for (std::size_t l = 0; l < stack.size(); ++l) {
      if (l > 0) {
        for (Var& v : layer_in) v = maybe_dropout(dropout, v);
      }
      std::vector<Var> layer_out(len);
      Var h = zeros, c = zeros;
      for (std::size_t step = 0; step < len; ++step) {
        const std::size_t j = reverse ? len - 1 - step : step;
        auto [h_new, c_new] = lstm_cell(stack[l], layer_in[j], h, c);
        h = ad::add(ad::mul(keep[j], h_new), ad::mul(hold[j], h));
        c = ad::add(ad::mul(keep[j], c_new), ad::mul(hold[j], c));
        layer_out[j] = h;
      }
      layer_in = std::move(layer_out);
    }
    return layer_in;
  };
  const std::vector<Var> fwd = run_stack(enc_fwd_, false);
  const std::vector<Var> bwd = run_stack(enc_bwd_, true);

  EncoderOutput out;
  Var proj = param("attn_proj");
  out.source_vectors.reserve(len);
  out.keys.reserve(len);
  for (std::size_t j = 0; j < len; ++j) {
    out.source_vectors.push_back(ad::concat({fwd[j], bwd[j]}));
    out.keys.push_back(ad::matmul(out.source_vectors.back(), proj));
  }
  Tensor bias(rows, len);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < len; ++j) bias(r, j) = source_mask(r, j) ? 0.0 : kMaskedScore;
  out.score_bias = tape_.constant(std::move(bias));

  // h_J per row: the forward state is carried through padding, so its last
  // column already holds position J; the backward state is gathered at J.
  Var last_bwd;
  for (std::size_t j = 0; j < len; ++j) {
    Tensor select(rows, 1);
    bool any = false;
    for (std::size_t r = 0; r < rows; ++r) {
      if (lengths[r] == j + 1) {
        select(r, 0) = 1.0;
        any = true;
      }
    }
    if (!any) continue;
    Var term = ad::mul(tape_.constant(std::move(select)), bwd[j]);
    last_bwd = last_bwd.valid() ? ad::add(last_bwd, term) : term;
  }
  out.final_state = ad::matmul(ad::concat({fwd[len - 1], last_bwd}), proj);
  return out;
}

DecoderState BoundModel::initial_state(const EncoderOutput& encoded) const {
  const std::size_t rows = encoded.final_state.value().rows();
  const Var zeros = tape_.constant(Tensor(rows, config().hidden_dim));
  DecoderState s;
  for (std::size_t l = 0; l < config().layers; ++l) {
    s.hidden.push_back(l == 0 ? encoded.final_state : zeros);
    s.cell.push_back(zeros);
  }
  s.feed = zeros;
  s.step = 0;
  return s;
}

DecoderStepOutput BoundModel::decoder_step(const DecoderState& state, std::span<const WordId> prev_words,
                                           const EncoderOutput& encoded, DropoutContext* dropout) const {
  for (WordId id : prev_words) {
    if (id < 0 || static_cast<std::size_t>(id) >= config().target_vocab) {
      throw ContractViolation("decoder_step: target id " + std::to_string(id) + " out of range");
    }
  }
  Var embedded = maybe_dropout(dropout, ad::embedding_lookup(param("tgt_embed"), prev_words));
  Var x = ad::concat({embedded, state.feed});
  DecoderStepOutput out;
  out.state.step = state.step + 1;
  for (std::size_t l = 0; l < dec_.size(); ++l) {
    if (l > 0) x = maybe_dropout(dropout, x);
    auto [h, c] = lstm_cell(dec_[l], x, state.hidden[l], state.cell[l]);
    out.state.hidden.push_back(h);
    out.state.cell.push_back(c);
    x = h;
  }
  const Var d = x;
  out.attention = attention_weights(d, encoded);
  const Var c = context(out.attention, encoded);
  out.attentional = ad::tanh(ad::matmul(ad::concat({c, d}), param("W_c"), /*transpose_b=*/true));
  out.state.feed = out.attentional;
  return out;
}

Var BoundModel::output_logits(Var attentional, DropoutContext* dropout) const {
  return ad::matmul(maybe_dropout(dropout, attentional), param("W_s"), /*transpose_b=*/true);
}

Var BoundModel::output_distribution(Var attentional, DropoutContext* dropout) const {
  return ad::softmax(output_logits(attentional, dropout));
}

std::vector<Var> BoundModel::teacher_forced_logits(const Batch& batch, DropoutContext* dropout) const {
  const EncoderOutput encoded = encode(batch.source_ids, batch.source_mask, dropout);
  DecoderState state = initial_state(encoded);
  std::vector<Var> logits;
  const std::size_t rows = batch.target_ids.rows;
  std::vector<WordId> prev(rows);
  for (std::size_t t = 0; t + 1 < batch.target_ids.cols; ++t) {
    for (std::size_t r = 0; r < rows; ++r) prev[r] = batch.target_ids(r, t);
    DecoderStepOutput step = decoder_step(state, prev, encoded, dropout);
    logits.push_back(output_logits(step.attentional, dropout));
    state = std::move(step.state);
  }
  return logits;
}

}  // namespace embnmt
