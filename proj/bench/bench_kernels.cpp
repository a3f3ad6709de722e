// Serial reference kernels against their OpenMP versions.
//   mixehr_bench --benchmark_filter=EStep

#include <benchmark/benchmark.h>

#include <random>

#include "mixehr/kernels.hpp"
#include "mixehr/synth.hpp"
#include "mixehr/trainer.hpp"

using namespace mixehr;

namespace {

struct EStepFixture {
    MultiCorpus corpus;
    ModelState model;
    TopicExpectations ex;
    std::vector<const Document*> docs;

    EStepFixture() {
        auto gt = generate_model(50, {2000, 500, 800}, 0.1, {0.05, 0.05, 0.05}, 11);
        corpus = generate_corpus(gt, 256, {60, 20, 30}, 12);
        TrainConfig cfg;
        cfg.K = 50;
        cfg.seed = 13;
        model = init_model(corpus.category_names(), corpus.vocab_sizes(), cfg, corpus.size());
        ex = compute_topic_expectations(model);
        for (const auto& d : corpus.docs) docs.push_back(&d);
    }
};

const EStepFixture& estep_fixture() {
    static const EStepFixture f;
    return f;
}

Matrix random_vectors(std::size_t n, std::size_t k) {
    std::mt19937_64 rng(17);
    std::gamma_distribution<double> g(0.3, 1.0);
    Matrix m(n, k);
    for (double& x : m.data) x = g(rng);
    return m;
}

void BM_EStepSerial(benchmark::State& state) {
    const auto& f = estep_fixture();
    for (auto _ : state) {
        auto out = estep_batch_serial(f.docs, f.model, f.ex, {}, false);
        benchmark::DoNotOptimize(out.stats);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.docs.size()));
}

void BM_EStepParallel(benchmark::State& state) {
    const auto& f = estep_fixture();
    const ExecPolicy exec{static_cast<int>(state.range(0)), state.range(1) != 0};
    for (auto _ : state) {
        auto out = estep_batch_parallel(f.docs, f.model, f.ex, {}, false, exec);
        benchmark::DoNotOptimize(out.stats);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.docs.size()));
}

void BM_CosineSerial(benchmark::State& state) {
    const auto v = random_vectors(static_cast<std::size_t>(state.range(0)), 110);
    for (auto _ : state) {
        auto s = cosine_similarity_serial(v);
        benchmark::DoNotOptimize(s.data.data());
    }
}

void BM_CosineParallel(benchmark::State& state) {
    const auto v = random_vectors(static_cast<std::size_t>(state.range(0)), 110);
    const ExecPolicy exec{static_cast<int>(state.range(1)), true};
    for (auto _ : state) {
        auto s = cosine_similarity_parallel(v, exec);
        benchmark::DoNotOptimize(s.data.data());
    }
}

}  // namespace

BENCHMARK(BM_EStepSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_EStepParallel)
    ->ArgNames({"threads", "deterministic"})
    ->ArgsProduct({{1, 2, 4, 8}, {0, 1}})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();
BENCHMARK(BM_CosineSerial)->Arg(1000)->Arg(3000)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_CosineParallel)
    ->ArgNames({"codes", "threads"})
    ->ArgsProduct({{1000, 3000}, {2, 4, 8}})
    ->Unit(benchmark::kMillisecond)
    ->UseRealTime();

BENCHMARK_MAIN();
