#include <benchmark/benchmark.h>

#include "udlm/model.hpp"
#include "udlm/objectives.hpp"

using namespace udlm;

namespace {

ModelConfig desk_config(const Vocabulary& v, int dim, int layers) {
    ModelConfig cfg;
    cfg.layers = layers;
    cfg.model_dim = dim;
    cfg.heads = 4;
    cfg.ffn_dim = 2 * dim;
    cfg.max_len = 256;
    cfg.vocab_size = v.total_size();
    cfg.prompt_dropout = 0.0;
    return cfg;
}

std::vector<int> random_tokens(const Vocabulary& v, int len, Rng& rng) {
    std::vector<int> toks(static_cast<size_t>(len));
    for (auto& t : toks) {
        t = v.text_ids().begin +
            static_cast<int>(uniform_below(rng, static_cast<uint64_t>(v.text_ids().size())));
    }
    return toks;
}

}  // namespace

static void BM_Forward(benchmark::State& state) {
    const Vocabulary v = Vocabulary::make_default();
    Rng rng = make_rng(1);
    const MaskPredictor model(desk_config(v, static_cast<int>(state.range(0)), 2), rng);
    const auto tokens = random_tokens(v, static_cast<int>(state.range(1)), rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.forward(tokens));
    }
    state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_Forward)->Args({64, 64})->Args({64, 128})->Args({128, 128})->Args({128, 256});

static void BM_ForwardBackward(benchmark::State& state) {
    const Vocabulary v = Vocabulary::make_default();
    Rng rng = make_rng(2);
    MaskPredictor model(desk_config(v, static_cast<int>(state.range(0)), 2), rng);

    LayoutSequence x0;
    Rng data_rng = make_rng(3);
    for (int i = 0; i < 64; ++i) {
        x0.push_back(v.text_ids().begin +
                         static_cast<int>(uniform_below(data_rng, static_cast<uint64_t>(v.text_ids().size()))),
                     Segment::RESPONSE, Modality::TEXT);
    }
    Rng mask_rng = make_rng(4);
    const MaskedSample sample = forward_mask(x0, 0.5, MaskScope::ALL, v, mask_rng);

    for (auto _ : state) {
        Params grads = model.zero_like();
        benchmark::DoNotOptimize(masked_ce_loss(model, sample, &grads).value);
    }
}
BENCHMARK(BM_ForwardBackward)->Arg(64)->Arg(128);
