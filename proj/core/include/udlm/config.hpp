#pragma once

#include <string>

#include "udlm/grpo.hpp"
#include "udlm/model.hpp"
#include "udlm/rewards.hpp"
#include "udlm/sampler.hpp"

namespace udlm {

enum class RunStage { PRETRAIN, SFT, RL, SAMPLE, ABLATE };

const char* run_stage_name(RunStage s);

struct TrainSettings {
    double lr = 1e-3;
    int ckpt_interval = 500;
    int probe_interval = 200;
    int probe_size = 8;
    double text_fraction = 0.5;
};

struct TaskSettings {
    std::string kind = "arithmetic";  // arithmetic | t2i | mixed
    int difficulty = 1;
    int response_len = 40;
    int t2i_response_len = 96;
    int pool_size = 0;  // >0: RL draws from a fixed pool of this many tasks
};

/// A run is reproducible from (config, seed) alone. Serialized as a flat
/// key-value text file; parsing is typed and rejects unknown keys.
struct RunConfig {
    RunStage stage = RunStage::PRETRAIN;
    uint64_t seed = 0;
    int steps = 1000;
    int batch_size = 8;
    std::string output_dir = "run";
    int vocab_image_codes = 64;

    ModelConfig model{2, 64, 4, 128, 160, 0, 0.1};  // vocab_size filled from the vocabulary
    SamplerConfig sampler;
    UniGRPOConfig rl;
    RewardTaskKind reward_kind = RewardTaskKind::TEXT_REASONING;
    std::string reward_components;  // optional "scorer:weight,..." override
    TrainSettings train;
    TaskSettings task;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& cfg);

/// The spec'd reward table for the configured task kind, with the optional
/// component override applied.
RewardSpec reward_spec_from(const RunConfig& cfg);

}  // namespace udlm
