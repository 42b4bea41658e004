#include <benchmark/benchmark.h>

#include <map>
#include <set>

#include "qqse/ranking.h"
#include "qqse/trainer.h"

namespace qqse {
namespace {

const Catalog& catalog() {
  static const Catalog c = load_catalog(QQSE_BENCH_CATALOG);
  return c;
}

/// Catalog words plus a few query words, random vectors.
const EmbeddingTable& table(std::size_t dim) {
  static std::map<std::size_t, EmbeddingTable> cache;
  auto it = cache.find(dim);
  if (it != cache.end()) return it->second;
  std::set<std::string> words = {"java", "mail", "api", "eclipse", "download", "windows"};
  for (const auto& q : catalog()) {
    for (const auto& t : question_tokens(q)) words.insert(t);
    for (const auto& t : answer_tokens(q)) words.insert(t);
  }
  Rng rng(dim);
  std::vector<std::pair<std::string, std::vector<float>>> entries;
  for (const auto& w : words) {
    std::vector<float> v(dim);
    for (float& x : v) x = static_cast<float>(rng.normal());
    entries.emplace_back(w, std::move(v));
  }
  return cache.emplace(dim, EmbeddingTable::from_entries(entries)).first->second;
}

const Tokens kQuery = {"java", "eclipse", "download", "windows"};

void BM_Forward(benchmark::State& state) {
  const auto& t = table(static_cast<std::size_t>(state.range(0)));
  const HyperParams hp;
  const auto weights = init_weights<float>(hp, t.dimension(), t.fingerprint());
  const auto input = embed_triplet(hp, t, kQuery, catalog().at(3));
  for (auto _ : state) benchmark::DoNotOptimize(forward(weights, input).probability());
}
BENCHMARK(BM_Forward)->Arg(50)->Arg(200);

void BM_ForwardBackward(benchmark::State& state) {
  const auto& t = table(static_cast<std::size_t>(state.range(0)));
  const HyperParams hp;
  const auto weights = init_weights<float>(hp, t.dimension(), t.fingerprint());
  auto grads = weights.zeros_like();
  const auto input = embed_triplet(hp, t, kQuery, catalog().at(3));
  for (auto _ : state) {
    const auto trace = forward(weights, input);
    backward(weights, trace, 1, grads);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(50)->Arg(200);

void BM_PredictScores(benchmark::State& state) {
  const auto& t = table(200);
  const auto weights = init_weights<float>(HyperParams{}, t.dimension(), t.fingerprint());
  const Predictor<float> predictor(weights, t, catalog());
  for (auto _ : state) benchmark::DoNotOptimize(predictor.predict(kQuery));
}
BENCHMARK(BM_PredictScores);

void BM_Metrics(benchmark::State& state) {
  Rng rng(1);
  std::vector<RankedQuery> queries;
  for (int i = 0; i < 1000; ++i) {
    ScoreVector s{};
    for (double& x : s) x = rng.uniform();
    queries.push_back({rank_by_score(s), {1 + i % 16, 1 + (i * 7) % 16}});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(mean_reciprocal_rank(queries));
    benchmark::DoNotOptimize(mean_average_precision(queries));
    benchmark::DoNotOptimize(mean_precision_at_k(queries, 3));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(queries.size()));
}
BENCHMARK(BM_Metrics);

void BM_TrainEpoch(benchmark::State& state) {
  const auto& t = table(50);
  std::vector<AnnotatedQuery> qs;
  const std::vector<std::string> words = {"java", "mail", "api", "eclipse", "download", "windows"};
  for (int i = 0; i < 64; ++i) {
    AnnotatedQuery q;
    q.id = "b" + std::to_string(i);
    q.seed_id = q.id;
    q.tokens = {words[i % 6], words[(i / 6) % 6], "w" + std::to_string(i)};
    q.valid_cq_ids = {1 + i % 16};
    qs.push_back(q);
  }
  const Corpus corpus(qs);
  HyperParams hp;
  hp.max_epochs = 1;
  hp.validation_fraction = 0;
  for (auto _ : state) benchmark::DoNotOptimize(train<float>(corpus, catalog(), t, hp).report);
  state.SetItemsProcessed(state.iterations() * 64 * kNumQuestions);
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace qqse

BENCHMARK_MAIN();
