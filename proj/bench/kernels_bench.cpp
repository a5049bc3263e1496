// Serial reference vs OpenMP kernels. Run with --benchmark_filter=... to
// pick one family; thread count follows OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "toba/corpus.hpp"
#include "toba/kernels.hpp"
#include "toba/rng.hpp"
#include "toba/tokenizer.hpp"

using namespace toba;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed, 0);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

template <bool Parallel>
void BM_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::matmul<double>(a, b, c, n, n, n);
    else
      kernels::serial::matmul<double>(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <bool Parallel>
void BM_attention(benchmark::State& state) {
  kernels::AttentionShape s;
  s.batch = 16;
  s.seq = static_cast<std::size_t>(state.range(0));
  s.n_heads = 4;
  s.d_head = 16;
  const auto qkv = random_vec(s.batch * s.seq * 3 * s.d_model(), 3);
  std::vector<double> out(s.batch * s.seq * s.d_model());
  std::vector<double> probs(s.batch * s.n_heads * s.seq * s.seq);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::parallel::attention_forward<double>(qkv, out, probs, s);
    else
      kernels::serial::attention_forward<double>(qkv, out, probs, s);
    benchmark::DoNotOptimize(out.data());
  }
}

std::vector<std::string> prose_docs(std::size_t n) {
  static const char* words[] = {"rumah", "gadang", "sawah", "jalan", "kampuang",
                                "danau", "dolok",  "huta",  "marsiajar", "pulang"};
  Rng rng(4, 0);
  std::vector<std::string> docs(n);
  for (auto& d : docs)
    for (int w = 0; w < 150; ++w) d += std::string(w ? " " : "") + words[rng.below(10)];
  return docs;
}

template <bool Parallel>
void BM_minhash(benchmark::State& state) {
  const auto docs = prose_docs(static_cast<std::size_t>(state.range(0)));
  const corpus::MinHashParams p;
  for (auto _ : state) {
    auto sigs = Parallel ? corpus::parallel::signatures(docs, p)
                         : corpus::serial::signatures(docs, p);
    benchmark::DoNotOptimize(sigs.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_count_units(benchmark::State& state) {
  const auto docs = prose_docs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto counts = Parallel ? tok::parallel::count_units(docs) : tok::serial::count_units(docs);
    benchmark::DoNotOptimize(counts.size());
  }
}

}  // namespace

BENCHMARK(BM_matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_matmul<true>)->Name("matmul/parallel")->Arg(64)->Arg(256)->UseRealTime();
BENCHMARK(BM_attention<false>)->Name("attention/serial")->Arg(32)->Arg(128);
BENCHMARK(BM_attention<true>)->Name("attention/parallel")->Arg(32)->Arg(128)->UseRealTime();
BENCHMARK(BM_minhash<false>)->Name("minhash/serial")->Arg(512);
BENCHMARK(BM_minhash<true>)->Name("minhash/parallel")->Arg(512)->UseRealTime();
BENCHMARK(BM_count_units<false>)->Name("count_units/serial")->Arg(2000);
BENCHMARK(BM_count_units<true>)->Name("count_units/parallel")->Arg(2000)->UseRealTime();

BENCHMARK_MAIN();
