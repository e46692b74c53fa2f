#pragma once

#include <memory>
#include <string>
#include <vector>

#include "udlm/checkpoint.hpp"
#include "udlm/config.hpp"
#include "udlm/grpo.hpp"
#include "udlm/tasks.hpp"

namespace udlm {

/// Root for run directories: $UDLM_OUTPUT_ROOT when set, else the current
/// directory.
std::string output_root();

/// Task stream for a config: arithmetic, t2i, or a deterministic mix.
/// Index i of a stream is reproducible from (seed, i) alone.
TaskInstance make_task(const RunConfig& cfg, const Vocabulary& v, uint64_t seed, uint64_t index);

/// Per-batch modality split under the configured text fraction (mixed
/// streams): item b of a batch is text iff b < round(fraction * batch).
bool batch_slot_is_text(const RunConfig& cfg, int slot);

/// Fixed training split: the first `n` tasks of the (seed, cfg) stream.
std::vector<TaskInstance> make_task_pool(const RunConfig& cfg, const Vocabulary& v, uint64_t seed,
                                         int n);

/// RL task source honoring task.pool_size (0 = unbounded stream).
TaskSource make_rl_task_source(const RunConfig& cfg, const Vocabulary& v,
                               std::shared_ptr<std::vector<TaskInstance>>& pool_out);

/// Runs one training stage end to end: writes config.lock, metrics.csv and
/// periodic checkpoints (with optimizer state) under the run directory.
///
/// init_ckpt rules: PRETRAIN starts fresh (or resumes from its own
/// checkpoint); SFT requires a PRETRAIN checkpoint; RL requires an SFT
/// checkpoint. Passing a checkpoint of the target stage resumes it: the
/// metrics file is truncated to the checkpoint step and the tail is
/// regenerated, which replays bit-identically for a fixed (config, seed).
/// Returns the run directory.
std::string run_stage(const RunConfig& cfg, const std::string& init_ckpt = "");

/// Reward-trend comparison across likelihood strategies: every (strategy,
/// seed) run shares the initial checkpoint, task stream and reward spec and
/// differs in nothing else. Writes per-run metrics CSVs plus a combined
/// comparison.csv (strategy,seed,step,mean_reward) usable as plot data.
/// Returns the ablation directory.
std::string run_ablation(const std::vector<Strategy>& strategies,
                         const std::vector<uint64_t>& seeds, const RunConfig& cfg,
                         const std::string& init_ckpt);

/// Formats one RL metrics row exactly as written to metrics.csv.
std::string format_rl_row(const RLStepMetrics& m);
inline constexpr const char* kRLMetricsHeader = "step,mean_reward,kl,clip_fraction,loss,strategy";
inline constexpr const char* kTrainMetricsHeader = "step,loss,val_text,val_t2i";

}  // namespace udlm
