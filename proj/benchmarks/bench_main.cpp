#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "embnmt/embeddings.hpp"
#include "embnmt/inference.hpp"
#include "embnmt/loss.hpp"
#include "embnmt/model.hpp"

using namespace embnmt;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

constexpr std::size_t kDim = 50;

std::vector<double> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> m(rows * cols);
  for (auto& x : m) x = u(rng);
  return m;
}

EmbeddingStore make_store(std::size_t vocab) {
  return EmbeddingStore(vocab, kDim, random_matrix(vocab, kDim, 1), 1.0, {}, {});
}

struct LossInput {
  std::vector<Tensor> probs;
  Grid<WordId> ids;
  Grid<std::uint8_t> mask;
  Grid<std::int64_t> keys;
};

LossInput make_loss_input(std::size_t vocab, std::size_t rows, std::size_t steps) {
  std::mt19937_64 rng(2);
  LossInput in{{}, Grid<WordId>(rows, steps), Grid<std::uint8_t>(rows, steps, 1), Grid<std::int64_t>(rows, steps)};
  for (std::size_t i = 0; i < rows * steps; ++i) {
    in.ids.data[i] = static_cast<WordId>(rng() % vocab);
    in.keys.data[i] = in.ids.data[i];
  }
  for (std::size_t t = 0; t < steps; ++t) {
    Tensor p(rows, vocab, random_matrix(rows, vocab, 3 + t));
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0;
      for (std::size_t k = 0; k < vocab; ++k) s += (p(r, k) = std::abs(p(r, k)));
      for (std::size_t k = 0; k < vocab; ++k) p(r, k) /= s;
    }
    in.probs.push_back(std::move(p));
  }
  return in;
}

void BM_EmbeddingLoss(benchmark::State& state) {
  const auto vocab = static_cast<std::size_t>(state.range(0));
  const EmbeddingStore store = make_store(vocab);
  const LossInput in = make_loss_input(vocab, 16, 20);
  for (auto _ : state) {
    Tape tape({.record = false, .checked = false});
    std::vector<Var> vars;
    for (const auto& p : in.probs) vars.push_back(tape.constant(p));
    benchmark::DoNotOptimize(embedding_loss(vars, in.keys, in.mask, store).value().item());
  }
}
BENCHMARK(BM_EmbeddingLoss)->Arg(1000)->Arg(5000)->Arg(20000)->Unit(benchmark::kMillisecond);

// Recomputes every distance on every call, as the literal double sum does.
void BM_EmbeddingLossDoubleSum(benchmark::State& state) {
  const auto vocab = static_cast<std::size_t>(state.range(0));
  const EmbeddingStore store = make_store(vocab);
  const LossInput in = make_loss_input(vocab, 16, 20);
  for (auto _ : state) {
    double total = 0;
    for (std::size_t t = 0; t < in.probs.size(); ++t)
      for (std::size_t r = 0; r < in.ids.rows; ++r) {
        const auto ref = store.row(in.ids(r, t));
        for (std::size_t k = 0; k < vocab; ++k)
          total += in.probs[t](r, k) * distance(store.row(static_cast<WordId>(k)), ref);
      }
    benchmark::DoNotOptimize(total);
  }
}
BENCHMARK(BM_EmbeddingLossDoubleSum)->Arg(1000)->Arg(5000)->Arg(20000)->Unit(benchmark::kMillisecond);

void BM_DistanceRowCold(benchmark::State& state) {
  const auto vocab = static_cast<std::size_t>(state.range(0));
  const std::vector<double> matrix = random_matrix(vocab, kDim, 1);
  std::int64_t key = 0;
  for (auto _ : state) {
    state.PauseTiming();
    EmbeddingStore store(vocab, kDim, matrix, 1.0, {}, {});
    state.ResumeTiming();
    benchmark::DoNotOptimize(store.distance_row(key)->distances.data());
    key = (key + 1) % static_cast<std::int64_t>(vocab);
  }
}
BENCHMARK(BM_DistanceRowCold)->Arg(1000)->Arg(20000)->Unit(benchmark::kMicrosecond);

ModelParams bench_model(std::size_t vocab, std::size_t hidden) {
  return ModelParams({.source_vocab = vocab, .target_vocab = vocab, .embed_dim = hidden, .hidden_dim = hidden,
                      .layers = 2},
                     5);
}

Batch bench_batch(std::size_t rows, std::size_t src_len, std::size_t tgt_len, std::size_t vocab) {
  std::mt19937_64 rng(6);
  Batch b;
  b.source_ids = Grid<WordId>(rows, src_len);
  b.source_mask = Grid<std::uint8_t>(rows, src_len, 1);
  b.target_ids = Grid<WordId>(rows, tgt_len + 1);
  b.target_mask = Grid<std::uint8_t>(rows, tgt_len + 1, 1);
  for (auto& w : b.source_ids.data) w = static_cast<WordId>(kNumSpecials + rng() % (vocab - kNumSpecials));
  for (auto& w : b.target_ids.data) w = static_cast<WordId>(kNumSpecials + rng() % (vocab - kNumSpecials));
  for (std::size_t r = 0; r < rows; ++r) b.target_ids(r, 0) = kBos;
  return b;
}

void BM_ForwardPass(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const ModelParams params = bench_model(1000, hidden);
  const Batch batch = bench_batch(16, 12, 12, 1000);
  for (auto _ : state) {
    Tape tape({.record = false, .checked = false});
    BoundModel model(params, tape);
    benchmark::DoNotOptimize(model.teacher_forced_logits(batch).back().value().data().data());
  }
}
BENCHMARK(BM_ForwardPass)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const auto hidden = static_cast<std::size_t>(state.range(0));
  const ModelParams params = bench_model(1000, hidden);
  const Batch batch = bench_batch(16, 12, 12, 1000);
  const DecoderTargets targets = decoder_targets(batch);
  for (auto _ : state) {
    Tape tape;
    BoundModel model(params, tape);
    std::vector<Var> probs;
    for (Var l : model.teacher_forced_logits(batch)) probs.push_back(ad::softmax(l));
    benchmark::DoNotOptimize(tape.backward(combined_loss(probs, targets, nullptr, LossPhase::kEnt).total).size());
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_BeamSearch(benchmark::State& state) {
  const auto width = static_cast<std::size_t>(state.range(0));
  const ModelParams params = bench_model(1000, 64);
  const std::vector<WordId> source{10, 11, 12, 13, 14, 15, 16, 17};
  for (auto _ : state) benchmark::DoNotOptimize(beam_search(params, source, width, 20).log_prob);
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
