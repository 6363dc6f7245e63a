#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "explainrank/evaluate.hpp"
#include "explainrank/reranker.hpp"
#include "explainrank/retrieval.hpp"

using namespace explainrank;

namespace {

Corpus synthetic_corpus(std::size_t docs, std::size_t vocab, std::size_t len) {
  std::mt19937_64 rng(42);
  std::vector<Document> out;
  out.reserve(docs);
  for (std::size_t i = 0; i < docs; ++i) {
    std::string text;
    for (std::size_t j = 0; j < len; ++j) text += "w" + std::to_string(rng() % vocab) + " ";
    out.push_back({"d" + std::to_string(i), {}, std::move(text), {}});
  }
  return Corpus(std::move(out));
}

void BM_Bm25Build(benchmark::State& state) {
  auto corpus = synthetic_corpus(static_cast<std::size_t>(state.range(0)), 5000, 100);
  for (auto _ : state) benchmark::DoNotOptimize(build_index(corpus));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Bm25Build)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_Bm25Search(benchmark::State& state) {
  auto index = build_index(synthetic_corpus(static_cast<std::size_t>(state.range(0)), 5000, 100));
  std::mt19937_64 rng(7);
  std::vector<std::string> queries;
  for (int i = 0; i < 64; ++i)
    queries.push_back("w" + std::to_string(rng() % 5000) + " w" + std::to_string(rng() % 5000) + " w" +
                      std::to_string(rng() % 5000));
  std::size_t q = 0;
  for (auto _ : state) benchmark::DoNotOptimize(bm25_search(index, queries[q++ % queries.size()], 100));
}
BENCHMARK(BM_Bm25Search)->Arg(1000)->Arg(10000)->Arg(50000);

void BM_NdcgAt10(benchmark::State& state) {
  std::vector<std::string> ranking;
  std::map<std::string, int> gains;
  for (int i = 0; i < 100; ++i) {
    ranking.push_back("d" + std::to_string(i));
    if (i % 7 == 0) gains[ranking.back()] = 1 + i % 2;
  }
  for (auto _ : state) benchmark::DoNotOptimize(ndcg_at_k(ranking, gains, 10));
}
BENCHMARK(BM_NdcgAt10);

void BM_ParseRerankOutput(benchmark::State& state) {
  std::string text;
  for (int i = 0; i < 20; ++i) text += "Step " + std::to_string(i) + ": the document discusses the topic.\n";
  text += "Relevance: 2";
  for (auto _ : state) benchmark::DoNotOptimize(parse_rerank_output(text));
}
BENCHMARK(BM_ParseRerankOutput);

}  // namespace

BENCHMARK_MAIN();
