#include <benchmark/benchmark.h>

#include "udlm/model.hpp"
#include "udlm/sampler.hpp"

using namespace udlm;

namespace {

/// Cheap deterministic predictor so the benchmark isolates scheduler cost.
struct FlatPredictor : Predictor {
    int vocab;
    explicit FlatPredictor(int v) : vocab(v) {}
    Mat logits(const std::vector<int>& tokens) const override {
        Mat out(static_cast<Eigen::Index>(tokens.size()), vocab);
        for (Eigen::Index i = 0; i < out.rows(); ++i) {
            for (int t = 0; t < vocab; ++t) {
                out(i, t) = static_cast<double>((i * 31 + t * 17) % 97) * 0.01;
            }
        }
        return out;
    }
};

}  // namespace

static void BM_SemiARScheduler(benchmark::State& state) {
    const Vocabulary v = Vocabulary::make_default();
    const FlatPredictor pred(v.total_size());
    LayoutSequence prompt;
    for (int i = 0; i < 8; ++i) {
        prompt.push_back(v.char_id('a'), Segment::PROMPT, Modality::TEXT);
    }
    SamplerConfig cfg;
    cfg.length = static_cast<int>(state.range(0));
    cfg.block_size = 64;
    cfg.unmask_k = 2;
    cfg.steps = cfg.length / 2;
    cfg.unmask_rule = UnmaskRule::FIXED_K;
    for (auto _ : state) {
        Rng rng = make_rng(1);
        benchmark::DoNotOptimize(semi_ar_generate(pred, prompt, v, cfg, rng));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SemiARScheduler)->Arg(128)->Arg(256)->Arg(1024);

static void BM_ParallelCosine(benchmark::State& state) {
    const Vocabulary v = Vocabulary::make_default();
    const FlatPredictor pred(v.total_size());
    LayoutSequence prompt;
    for (int i = 0; i < 8; ++i) {
        prompt.push_back(v.char_id('a'), Segment::PROMPT, Modality::TEXT);
    }
    SamplerConfig cfg;
    cfg.length = static_cast<int>(state.range(0));
    cfg.steps = 50;
    cfg.unmask_rule = UnmaskRule::SCHEDULE_DERIVED;
    cfg.schedule_kind = ScheduleKind::COSINE;
    cfg.response_modality = Modality::IMAGE;
    cfg.guidance_scale = 3.5;
    for (auto _ : state) {
        Rng rng = make_rng(1);
        benchmark::DoNotOptimize(parallel_generate(pred, prompt, v, cfg, rng));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ParallelCosine)->Arg(64)->Arg(256)->Arg(1024);
