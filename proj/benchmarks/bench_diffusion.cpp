#include <benchmark/benchmark.h>

#include "udlm/diffusion.hpp"

using namespace udlm;

static void BM_ForwardMask(benchmark::State& state) {
    const Vocabulary v = Vocabulary::make_default();
    LayoutSequence x0;
    Rng data_rng = make_rng(1);
    for (int i = 0; i < state.range(0); ++i) {
        x0.push_back(v.text_ids().begin +
                         static_cast<int>(uniform_below(data_rng, static_cast<uint64_t>(v.text_ids().size()))),
                     Segment::RESPONSE, Modality::TEXT);
    }
    Rng rng = make_rng(2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(forward_mask(x0, 0.5, MaskScope::ALL, v, rng));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardMask)->Arg(64)->Arg(1024);

static void BM_MarginalTransition(benchmark::State& state) {
    const int K = static_cast<int>(state.range(0));
    const int T = static_cast<int>(state.range(1));
    TransitionSpec spec;
    spec.K = K;
    for (int s = 0; s < T; ++s) {
        spec.alpha.push_back(0.6);
        spec.beta.push_back(0.3 / K);
        spec.gamma.push_back(0.1);
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(marginal_transition(spec, T));
    }
}
BENCHMARK(BM_MarginalTransition)->Args({4, 5})->Args({64, 16})->Args({512, 16});

BENCHMARK_MAIN();
