// Serial reference vs OpenMP kernels.
#include <random>

#include <benchmark/benchmark.h>

#include "nle/kernels.hpp"
#include "nle/text_metrics.hpp"

using namespace nle;

namespace {

std::vector<std::string> synthetic_texts(std::size_t n) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> word(0, 400), len(5, 30);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string s;
    for (int k = len(rng); k > 0; --k) s += "w" + std::to_string(word(rng)) + " ";
    out.push_back(s + "end.");
  }
  return out;
}

std::vector<text::TokenSequence> corpus(std::size_t n) {
  std::vector<text::TokenSequence> c;
  for (const auto& t : synthetic_texts(n)) c.push_back(text::tokenize(t));
  return c;
}

void BM_SelfBleuSerial(benchmark::State& state) {
  const auto c = corpus(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::self_bleu_serial(c));
}

void BM_SelfBleuParallel(benchmark::State& state) {
  const auto c = corpus(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::self_bleu_parallel(c));
  state.counters["threads"] = kernels::max_threads();
}

void BM_LexicalSerial(benchmark::State& state) {
  const auto texts = synthetic_texts(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::lexical_scores_serial({texts}));
}

void BM_LexicalParallel(benchmark::State& state) {
  const auto texts = synthetic_texts(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(kernels::lexical_scores_parallel({texts}));
}

}  // namespace

BENCHMARK(BM_SelfBleuSerial)->Arg(50)->Arg(200);
BENCHMARK(BM_SelfBleuParallel)->Arg(50)->Arg(200);
BENCHMARK(BM_LexicalSerial)->Arg(1000)->Arg(10000);
BENCHMARK(BM_LexicalParallel)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
