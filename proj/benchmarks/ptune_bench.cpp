// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "ptune/kernels.hpp"
#include "ptune/metrics.hpp"
#include "ptune/model.hpp"
#include "ptune/rng.hpp"
#include "ptune/synthetic.hpp"
#include "ptune/tokenizer.hpp"

namespace {

using namespace ptune;

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

template <void (*Gemm)(const float*, const float*, float*, std::size_t, std::size_t, std::size_t)>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    Gemm(a.data(), b.data(), c.data(), n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Gemm<kernels::gemm_nn<float>>)->Name("gemm_nn")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<kernels::gemm_nt<float>>)->Name("gemm_nt")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<kernels::gemm_tn<float>>)->Name("gemm_tn")->Arg(64)->Arg(128)->Arg(256);

void BM_Forward(benchmark::State& state) {
  const auto cfg = model::TransformerConfig::preset("toy-M", 512);
  auto m = model::Transformer<float>::init(cfg, 1);
  m.set_frozen(true);
  const auto len = static_cast<std::size_t>(state.range(0));
  std::vector<std::int32_t> ids(len);
  for (std::size_t i = 0; i < len; ++i) ids[i] = static_cast<std::int32_t>(i % 500);
  for (auto _ : state) {
    auto logits = m.forward(m.embed(ids));
    benchmark::DoNotOptimize(logits.data().data());
  }
}
BENCHMARK(BM_Forward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_Bpe(benchmark::State& state) {
  const auto docs = synthetic::lm_corpus(200, 1);
  for (auto _ : state) benchmark::DoNotOptimize(bpe::train_bpe(docs, 400, 0).size());
}
BENCHMARK(BM_Bpe)->Unit(benchmark::kMillisecond);

void BM_Rouge(benchmark::State& state) {
  const auto ex = synthetic::generate(64, 3, "b");
  std::vector<metrics::Pair> pairs;
  for (std::size_t i = 0; i < ex.size(); ++i) pairs.push_back({ex[i].summary, ex[(i + 1) % ex.size()].summary});
  for (auto _ : state) benchmark::DoNotOptimize(metrics::evaluate(pairs).overall);
}
BENCHMARK(BM_Rouge)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
