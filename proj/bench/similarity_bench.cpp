// Serial reference versus OpenMP top-k over a hashed-embedding pool.
// Pool size is the benchmark argument.

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "rdc/embedding.hpp"
#include "rdc/similarity.hpp"

namespace {

struct Pool {
  rdc::SimilarityIndex index;
  std::vector<rdc::EmbeddingVector> queries;
};

Pool make_pool(std::size_t n) {
  const rdc::HashedEmbeddingProvider provider(256, 0);
  std::mt19937_64 rng(7);
  auto text = [&] {
    std::string out;
    for (int w = 0; w < 12; ++w) out += "w" + std::to_string(rng() % 5000) + " ";
    return out;
  };
  std::vector<std::pair<std::string, rdc::EmbeddingVector>> entries;
  entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) entries.emplace_back("doc-" + std::to_string(i), rdc::embed_text(text(), provider));
  std::vector<rdc::EmbeddingVector> queries;
  for (int i = 0; i < 16; ++i) queries.push_back(rdc::embed_text(text(), provider));
  return {rdc::SimilarityIndex(provider.provider_id(), 256, std::move(entries)), std::move(queries)};
}

template <auto TopK>
void run(benchmark::State& state) {
  const auto pool = make_pool(static_cast<std::size_t>(state.range(0)));
  std::size_t q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(TopK(pool.index, pool.queries[q++ % pool.queries.size()], rdc::kDefaultTopK));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_TopKSerial(benchmark::State& state) { run<&rdc::top_k_serial>(state); }
void BM_TopKParallel(benchmark::State& state) { run<&rdc::top_k>(state); }

}  // namespace

BENCHMARK(BM_TopKSerial)->Arg(1000)->Arg(10000)->Arg(100000);
BENCHMARK(BM_TopKParallel)->Arg(1000)->Arg(10000)->Arg(100000);

BENCHMARK_MAIN();
