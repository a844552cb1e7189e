// Serial reference kernels against their OpenMP counterparts, plus one full
// training step at the acceptance-suite model size.

#include "lotus/kernels.hpp"
#include "lotus/rng.hpp"
#include "lotus/signals.hpp"
#include "lotus/synthetic.hpp"
#include "lotus/trainer.hpp"

#include <benchmark/benchmark.h>

#include <vector>

namespace {

using MatmulFn = void (*)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  lotus::Rng rng(seed);
  std::vector<double> out(n);
  for (auto& x : out) {
    x = rng.uniform(-1, 1);
  }
  return out;
}

void run_matmul(benchmark::State& state, MatmulFn fn) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_buffer(n * n, 1);
  const auto b = random_buffer(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    fn(a.data(), b.data(), c.data(), n, n, n);
    benchmark::DoNotOptimize(c.data());
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

void BM_matmul_nn_reference(benchmark::State& s) { run_matmul(s, lotus::kernels::reference::matmul_nn); }
void BM_matmul_nn_parallel(benchmark::State& s) { run_matmul(s, lotus::kernels::matmul_nn); }
void BM_matmul_nt_reference(benchmark::State& s) { run_matmul(s, lotus::kernels::reference::matmul_nt); }
void BM_matmul_nt_parallel(benchmark::State& s) { run_matmul(s, lotus::kernels::matmul_nt); }
void BM_matmul_tn_reference(benchmark::State& s) { run_matmul(s, lotus::kernels::reference::matmul_tn); }
void BM_matmul_tn_parallel(benchmark::State& s) { run_matmul(s, lotus::kernels::matmul_tn); }

BENCHMARK(BM_matmul_nn_reference)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_matmul_nn_parallel)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_matmul_nt_reference)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_matmul_nt_parallel)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_matmul_tn_reference)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_matmul_tn_parallel)->RangeMultiplier(4)->Range(16, 256);

void run_softmax(benchmark::State& state, void (*fn)(double*, std::size_t, std::size_t, const std::size_t*)) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto src = random_buffer(n * n, 3);
  std::vector<double> x(src.size());
  for (auto _ : state) {
    x = src;
    fn(x.data(), n, n, nullptr);
    benchmark::DoNotOptimize(x.data());
  }
}

void BM_softmax_reference(benchmark::State& s) { run_softmax(s, lotus::kernels::reference::softmax_rows); }
void BM_softmax_parallel(benchmark::State& s) { run_softmax(s, lotus::kernels::softmax_rows); }

BENCHMARK(BM_softmax_reference)->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_softmax_parallel)->RangeMultiplier(4)->Range(16, 256);

void BM_train_step(benchmark::State& state) {
  lotus::synthetic::LengthTaskOptions opts;
  opts.n_examples = 64;
  const auto examples = lotus::synthetic::length_task(opts);
  const auto anns = lotus::annotate_corpus(examples, {});
  std::vector<lotus::AnnotatedExample> annotated;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    annotated.push_back({examples[i], anns[i].signals});
  }
  lotus::TrainConfig cfg;
  cfg.control_kinds = {lotus::ControlKind::Length};
  cfg.batch_size = 8;
  cfg.total_steps = 1'000'000;
  cfg.model.d_model = 32;
  cfg.model.n_heads = 4;
  cfg.model.d_ff = 64;
  cfg.model.n_layers_enc = 1;
  cfg.model.n_layers_dec = 1;
  cfg.model.max_src_len = 96;
  cfg.model.max_tgt_len = 40;
  auto train_state = lotus::init_train_state(cfg, lotus::build_training_vocab(annotated, cfg.control_kinds, 1));
  const auto data = lotus::prepare_examples(annotated, cfg.control_kinds, train_state.vocab, cfg.model);
  const std::vector<lotus::PreparedExample> batch(data.begin(), data.begin() + 8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(lotus::train_step(train_state, batch, cfg));
  }
}

BENCHMARK(BM_train_step)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
