#include <benchmark/benchmark.h>

#include <memory>

#include "cold/constraints.hpp"
#include "cold/corpus.hpp"
#include "cold/discretizer.hpp"
#include "cold/metrics.hpp"
#include "cold/sampler.hpp"
#include "cold/tasks.hpp"

using namespace cold;

namespace {

// Small forward and reverse models shared by every benchmark.
const TaskModels& models() {
  static const TaskModels m = [] {
    const TextCorpus text = generate_story_corpus(0, 400);
    const Vocabulary vocab = build_vocabulary(text);
    const Corpus corpus = encode_corpus(text, vocab);
    TrainConfig cfg;
    cfg.epochs = 1;
    TaskModels out;
    out.forward = std::make_shared<LanguageModel>(train(corpus, vocab, Direction::forward, cfg));
    out.reverse = std::make_shared<LanguageModel>(train(corpus, vocab, Direction::reverse, cfg));
    out.stopwords = stopword_ids(vocab, load_stopwords());
    return out;
  }();
  return m;
}

TaskInstance instance(TaskKind kind) {
  return generate_instances(kind, 1, 3, models().vocab(), models().stopwords).front();
}

void BM_NextTokenDist(benchmark::State& state) {
  const auto& m = models();
  Tokens prefix(static_cast<std::size_t>(state.range(0)), 4);
  prefix.front() = Vocabulary::bos;
  for (auto _ : state) benchmark::DoNotOptimize(next_token_dist(*m.forward, prefix, nullptr));
}
BENCHMARK(BM_NextTokenDist)->Arg(8)->Arg(32);

void BM_EnergyGradient(benchmark::State& state) {
  const auto kind = static_cast<TaskKind>(state.range(0));
  const TaskInstance inst = instance(kind);
  const EnergySpec spec = task_energy(inst, WeightConfig::defaults(kind), models());
  const DecodeConfig cfg = task_decode_defaults(kind);
  const SoftSequence y = init_soft_sequence(*models().forward, task_left_context(inst), cfg.length);
  for (auto _ : state) benchmark::DoNotOptimize(spec.evaluate(y.logits, {1, cfg.length}));
  state.SetLabel(task_kind_name(kind));
}
BENCHMARK(BM_EnergyGradient)
    ->Arg(static_cast<int>(TaskKind::abductive))
    ->Arg(static_cast<int>(TaskKind::counterfactual))
    ->Arg(static_cast<int>(TaskKind::lexical));

void BM_LangevinChains(benchmark::State& state) {
  const TaskInstance inst = instance(TaskKind::abductive);
  const EnergySpec spec = task_energy(inst, WeightConfig::defaults(TaskKind::abductive), models());
  DecodeConfig cfg = task_decode_defaults(TaskKind::abductive);
  cfg.iterations = 10;
  const std::size_t chains = static_cast<std::size_t>(state.range(0));
  const SoftSequence y = init_soft_sequence(*models().forward, task_left_context(inst), cfg.length);
  const std::vector<SoftSequence> init(chains, y);
  for (auto _ : state) {
    Array rows = stack_chains(init);
    std::vector<Rng> rngs;
    for (std::size_t i = 0; i < chains; ++i) rngs.emplace_back(derive_seed(1, i));
    benchmark::DoNotOptimize(run_chains(rows, {chains, cfg.length}, spec, cfg, rngs));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(chains * cfg.iterations));
}
BENCHMARK(BM_LangevinChains)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_TopkFilter(benchmark::State& state) {
  const TaskInstance inst = instance(TaskKind::lexical);
  const SoftSequence y = init_soft_sequence(*models().forward, {}, 10);
  DiscretizeConfig cfg;
  cfg.extra_tokens = inst.keywords;
  for (auto _ : state) benchmark::DoNotOptimize(topk_filter(y, *models().forward, cfg));
}
BENCHMARK(BM_TopkFilter);

void BM_EditScript(benchmark::State& state) {
  Rng rng(5);
  const auto n = static_cast<std::size_t>(state.range(0));
  Tokens a(n), b(n);
  for (auto& t : a) t = static_cast<TokenId>(rng.below(20));
  for (auto& t : b) t = static_cast<TokenId>(rng.below(20));
  for (auto _ : state) benchmark::DoNotOptimize(edit_script(a, b));
}
BENCHMARK(BM_EditScript)->Arg(10)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
