#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "udlm/model.hpp"
#include "udlm/vocab.hpp"

namespace udlm {

enum class Stage { NONE, PRETRAIN, SFT, RL };

const char* stage_name(Stage s);
std::optional<Stage> stage_from_name(const std::string& name);

/// Versioned binary container: model config, named parameter tensors, the
/// serialized vocabulary (checkpoints are self-describing) and, optionally,
/// optimizer moments so a resumed run replays bit-identically.
struct CheckpointData {
    Stage stage = Stage::NONE;
    uint64_t step = 0;
    ModelConfig config;
    Vocabulary vocab;
    Params params;
    bool has_adam = false;
    Params adam_m;
    Params adam_v;
    int64_t adam_t = 0;

    MaskPredictor make_model() const;
};

void save_checkpoint(const std::string& path, const MaskPredictor& model, const Vocabulary& vocab,
                     Stage stage, uint64_t step, const AdamState* adam = nullptr);

CheckpointData load_checkpoint(const std::string& path);

/// Loading against a mismatched vocabulary is an error.
CheckpointData load_checkpoint(const std::string& path, const Vocabulary& expected);

}  // namespace udlm
