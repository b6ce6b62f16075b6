#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "embnmt/autodiff.hpp"
#include "embnmt/corpus.hpp"
#include "embnmt/embeddings.hpp"
#include "embnmt/loss.hpp"
#include "embnmt/model.hpp"

namespace embnmt {

struct TrainConfig {
  // Adam
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  double grad_clip = 5.0;
  double weight_decay = 1e-6;
  double dropout = 0.3;
  double lr_decay_factor = 1.0 / std::sqrt(2.0);
  double lambda = 1.0;

  std::size_t batch_size = 64;
  std::size_t embed_dim = 512;
  std::size_t hidden_dim = 512;
  std::size_t layers = 2;
  std::size_t max_epochs = 10;
  std::uint64_t seed = 1;

  void validate() const;
};

enum class StrategyKind {
  kEntOnly,
  kCombined,
  kCombinedAfterEntPretrain,
  kEmbAfterEntPretrain,
  // Trains on l_emb from random initialization; off unless explicitly allowed.
  kEmbFromScratch,
};

std::string to_string(StrategyKind kind);
StrategyKind parse_strategy(const std::string& text);

struct TrainingStrategy {
  StrategyKind kind = StrategyKind::kEntOnly;
  // Pre-training length for *_AFTER_ENT_PRETRAIN; unset means "until the first
  // validation epoch that fails to improve".
  std::optional<std::size_t> pretrain_epochs;
  bool allow_emb_from_scratch = false;

  bool has_pretrain() const;
  bool needs_embeddings() const;
  // Objective after pre-training (or the only one when there is none).
  LossPhase main_phase() const;
  void validate(const EmbeddingStore* store) const;
};

struct AdamState {
  std::size_t step = 0;
  std::vector<ad::Tensor> m;
  std::vector<ad::Tensor> v;

  bool operator==(const AdamState&) const = default;
};

AdamState make_adam_state(const ModelParams& params);

// Gradients must cover every parameter. Weight decay is decoupled:
// p <- p - lr * wd * p after the bias-corrected Adam term.
void adam_step(ModelParams& params, const ad::GradientMap& grads, AdamState& state, const TrainConfig& config,
               double lr);

double global_norm(const ad::GradientMap& grads);

// Rescales to max_norm when the global L2 norm exceeds it. Returns the norm
// before clipping.
double clip_gradients(ad::GradientMap& grads, double max_norm);

// lr * factor iff the last validation loss is strictly larger than the one before it.
double lr_decay_on_plateau(std::span<const double> history, double lr, double factor = 1.0 / std::sqrt(2.0));

// A batch with its decoder-aligned targets, OOV references already resolved.
struct PreparedBatch {
  Batch batch;
  DecoderTargets targets;
};

std::vector<PreparedBatch> prepare_batches(std::vector<Batch> batches, const EmbeddingStore* store,
                                           const Vocabulary& target_vocab);

// Sees the global gradient norm of every update before and after clipping.
struct StepTrace {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double norm_before_clip = 0.0;
  double norm_after_clip = 0.0;
};
using StepObserver = std::function<void(const StepTrace&)>;

// One optimization pass: teacher-forced forward, loss, backward, clip, Adam.
// Returns per-sentence averages over the epoch.
LossBreakdown train_epoch(ModelParams& params, AdamState& adam, std::span<const PreparedBatch> batches,
                          const TrainConfig& config, LossPhase phase, const EmbeddingStore* store, double lr,
                          std::size_t epoch, const StepObserver& on_step = {});

// Forward-only loss with dropout disabled.
LossBreakdown evaluate_loss(const ModelParams& params, std::span<const PreparedBatch> batches, LossPhase phase,
                            const EmbeddingStore* store, double lambda = 1.0);

struct EpochLogRow {
  std::size_t epoch = 0;  // 1-based
  LossPhase phase = LossPhase::kEnt;
  LossBreakdown train;
  LossBreakdown valid;
  // Learning rate after this epoch's plateau check.
  double lr = 0.0;
};

// Tab-separated: epoch, phase, train_total, train_ent, train_emb, valid_total,
// valid_ent, valid_emb, lr.
std::string format_log_row(const EpochLogRow& row);
void write_training_log(std::ostream& out, std::span<const EpochLogRow> rows, const std::string& header = {});
// Skips '#' header lines.
std::vector<EpochLogRow> parse_training_log(std::istream& in);

struct CheckpointMeta {
  std::size_t epoch = 0;
  double valid_loss = 0.0;
  double lr = 0.0;
  LossPhase phase = LossPhase::kEnt;
  std::string parameter_file;
};

// Index into `log` of the minimum validation loss among rows of the final
// phase; the earliest epoch wins ties.
std::size_t select_best_epoch(std::span<const EpochLogRow> log);

struct RunResult {
  ModelParams best;
  AdamState best_adam;
  CheckpointMeta best_meta;
  std::vector<EpochLogRow> log;
};

using EpochCallback = std::function<void(const EpochLogRow&)>;

// Runs pre-training (if any) then the main phase for config.max_epochs epochs
// in total, decaying lr on validation plateaus within a phase and keeping the
// parameters with the smallest final-phase validation loss.
RunResult run_strategy(const ModelParams& initial, std::span<const PreparedBatch> train,
                       std::span<const PreparedBatch> valid, const TrainConfig& config,
                       const TrainingStrategy& strategy, const EmbeddingStore* store,
                       const EpochCallback& on_epoch = {}, const StepObserver& on_step = {});

}  // namespace embnmt
