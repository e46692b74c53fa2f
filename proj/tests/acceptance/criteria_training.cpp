// Criteria 4, 7, 8, 10: overfit reconstruction, RL improvement, ablation
// direction, reproducibility. These train real (desk-scale) models.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "../helpers.hpp"
#include "acceptance.hpp"
#include "udlm/harness.hpp"
#include "udlm/objectives.hpp"
#include "udlm/sampler.hpp"

namespace fs = std::filesystem;

namespace acceptance {

using namespace udlm;
using udlm::testing::median;
using udlm::testing::random_text;

namespace {

double elapsed_since(const std::chrono::steady_clock::time_point& start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// ---- criterion 4: overfit reconstruction ---------------------------------

constexpr int kOverfitPromptLen = 16;
constexpr int kOverfitResponseLen = 44;
constexpr int kOverfitSteps = 2000;
constexpr double kOverfitLr = 1.5e-3;
// per-masked-token probe loss after the overfit run; pinned from the pilot
// run recorded in this repository
constexpr double kOverfitLossThreshold = 0.05;

ModelConfig overfit_model_config(const Vocabulary& v) {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.model_dim = 64;
    cfg.heads = 4;
    cfg.ffn_dim = 128;
    cfg.max_len = 72;
    cfg.vocab_size = v.total_size();
    cfg.prompt_dropout = 0.0;
    return cfg;
}

void criterion_overfit(Checker& check) {
    const auto start = std::chrono::steady_clock::now();
    const Vocabulary v = Vocabulary::make_default();

    Rng data_rng = make_rng(400);
    std::vector<LayoutSequence> sequences;
    for (int i = 0; i < 8; ++i) {
        LayoutSequence x0 = random_text(v, kOverfitPromptLen, data_rng, Segment::PROMPT);
        x0.append(random_text(v, kOverfitResponseLen, data_rng, Segment::RESPONSE));
        sequences.push_back(std::move(x0));
    }

    Rng init_rng = make_rng(401);
    MaskPredictor model(overfit_model_config(v), init_rng);
    AdamState adam(model, kOverfitLr);

    std::vector<BatchItem> batch;
    for (const auto& seq : sequences) {
        batch.push_back({nullptr, &seq});
    }
    for (int step = 0; step < kOverfitSteps; ++step) {
        Rng loss_rng = derive_rng(402, "overfit", static_cast<uint64_t>(step));
        Params grads = model.zero_like();
        batch_loss(model, batch, LossKind::UNIFIED, v, loss_rng, &grads);
        adam.step(model, grads);
    }

    // probe loss per masked token at fixed corruption (t = 0.5)
    double probe = 0.0;
    int probe_tokens = 0;
    Rng probe_rng = make_rng(403);
    for (const auto& seq : sequences) {
        const MaskedSample sample = forward_mask(seq, 0.5, MaskScope::ALL, v, probe_rng);
        probe += masked_ce_loss(model, sample).value * sample.t;
        probe_tokens += static_cast<int>(sample.mask_positions.size());
    }
    probe /= probe_tokens;
    check.note("probe_nats_per_token", probe);
    check.require(probe < kOverfitLossThreshold, "overfit probe loss above threshold");

    // greedy regeneration of every held-in response
    SamplerConfig sampler;
    sampler.length = kOverfitResponseLen;
    sampler.block_size = kOverfitResponseLen;
    sampler.unmask_k = 4;
    sampler.steps = kOverfitResponseLen / 4;
    sampler.unmask_rule = UnmaskRule::FIXED_K;
    sampler.temperature = 0.0;

    int regenerated = 0;
    for (const auto& seq : sequences) {
        const LayoutSequence prompt = seq.slice(0, kOverfitPromptLen);
        Rng rng = make_rng(404);
        const LayoutSequence out = semi_ar_generate(model, prompt, v, sampler, rng);
        bool match = true;
        for (size_t i = 0; i < seq.size(); ++i) {
            match &= out.tokens[i] == seq.tokens[i];
        }
        regenerated += match ? 1 : 0;
    }
    check.note("regenerated", regenerated);
    check.require(regenerated >= static_cast<int>(std::ceil(0.9 * 8)),
                  "fewer than 90% of responses regenerate exactly");

    // single-token inpainting across every position of every sequence
    SamplerConfig inpaint_cfg;
    inpaint_cfg.steps = 1;
    inpaint_cfg.unmask_rule = UnmaskRule::SCHEDULE_DERIVED;
    int recovered = 0, trials = 0;
    Rng inpaint_rng = make_rng(405);
    for (const auto& seq : sequences) {
        for (size_t pos = 0; pos < seq.size(); ++pos) {
            LayoutSequence partial = seq;
            partial.tokens[pos] = v.mask_id();
            const LayoutSequence out = inpaint(model, partial, v, inpaint_cfg, inpaint_rng);
            recovered += out.tokens[pos] == seq.tokens[pos] ? 1 : 0;
            ++trials;
        }
    }
    const double accuracy = static_cast<double>(recovered) / trials;
    check.note("inpaint_accuracy", accuracy);
    check.require(accuracy >= 0.95, "single-token inpainting below 95%");

    const double secs = elapsed_since(start);
    check.require(secs < 600.0, "runtime over 10 minutes");
}

// ---- shared RL fixture ----------------------------------------------------

constexpr int kRLDifficulty = 0;
constexpr int kRLResponseLen = 40;
constexpr int kPretrainSteps = 700;
constexpr int kSftSteps = 4000;
constexpr int kRLOuterSteps = 300;
constexpr int kRLPoolSize = 48;     // fixed training split, revisited across steps
constexpr uint64_t kRLPoolSeed = 97;
constexpr int kEvalGroups = 48;     // groups per policy evaluation
// reward level used for the steps-to-threshold comparison; pinned from the
// pilot run recorded in this repository
constexpr double kRewardThreshold = 1.4;

RunConfig rl_base_config() {
    RunConfig cfg;
    cfg.seed = 1;
    cfg.batch_size = 8;
    cfg.vocab_image_codes = 64;
    cfg.model = ModelConfig{2, 64, 4, 128, 72, 0, 0.1};
    cfg.task.kind = "arithmetic";
    cfg.task.difficulty = kRLDifficulty;
    cfg.task.response_len = kRLResponseLen;
    cfg.train.lr = 1e-3;
    cfg.train.ckpt_interval = 1000000;  // only the final checkpoint
    cfg.train.probe_interval = 0;
    cfg.task.pool_size = kRLPoolSize;
    cfg.sampler.length = kRLResponseLen;
    cfg.sampler.block_size = 20;
    cfg.sampler.unmask_k = 4;
    cfg.sampler.steps = kRLResponseLen / 4;
    cfg.sampler.unmask_rule = UnmaskRule::FIXED_K;
    cfg.sampler.temperature = 0.9;
    cfg.rl.group_size = 4;
    cfg.rl.mu = 2;
    cfg.rl.epsilon = 0.2;
    cfg.rl.beta = 0.02;
    cfg.rl.diffusion_steps = 1000;
    cfg.rl.lr = 2e-4;
    return cfg;
}

/// Pretrain + SFT once; later invocations reuse the cached checkpoint.
std::string ensure_sft_checkpoint() {
    const std::string root = fixture_dir();
    const std::string sft_ckpt = root + "/sft/ckpt/step_" +
                                 (std::ostringstream() << std::setw(6) << std::setfill('0')
                                                       << kSftSteps)
                                     .str() +
                                 ".bin";
    if (fs::exists(sft_ckpt)) {
        return sft_ckpt;
    }
    ::setenv("UDLM_OUTPUT_ROOT", root.c_str(), 1);

    RunConfig pre = rl_base_config();
    pre.stage = RunStage::PRETRAIN;
    pre.steps = kPretrainSteps;
    pre.train.ckpt_interval = kPretrainSteps;
    pre.output_dir = "pretrain";
    const std::string pre_dir = run_stage(pre);

    RunConfig sft = rl_base_config();
    sft.stage = RunStage::SFT;
    sft.steps = kSftSteps;
    sft.train.ckpt_interval = kSftSteps;
    sft.output_dir = "sft";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "step_%06d.bin", kPretrainSteps);
    run_stage(sft, pre_dir + "/ckpt/" + buf);
    ::unsetenv("UDLM_OUTPUT_ROOT");
    return sft_ckpt;
}

std::string rl_run_tag(Strategy strategy, NoiseMode mode, uint64_t seed) {
    return std::string("rl_") + strategy_name(strategy) + "_" +
           (mode == NoiseMode::STRUCTURED ? "structured" : "random") + "_seed" +
           std::to_string(seed);
}

/// One RL run from the shared SFT checkpoint; rows and the trained policy
/// are cached on disk so the criteria (and repeat invocations) never
/// retrain the same configuration.
std::vector<RLStepMetrics> rl_rows(Strategy strategy, NoiseMode mode, uint64_t seed) {
    const std::string cache = fixture_dir() + "/" + rl_run_tag(strategy, mode, seed) + ".csv";
    std::vector<RLStepMetrics> rows;
    if (fs::exists(cache)) {
        std::ifstream in(cache);
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            RLStepMetrics m;
            std::istringstream ls(line);
            std::string field;
            std::getline(ls, field, ',');
            m.step = std::atoi(field.c_str());
            std::getline(ls, field, ',');
            m.mean_reward = std::atof(field.c_str());
            std::getline(ls, field, ',');
            m.kl = std::atof(field.c_str());
            std::getline(ls, field, ',');
            m.clip_fraction = std::atof(field.c_str());
            std::getline(ls, field, ',');
            m.loss = std::atof(field.c_str());
            rows.push_back(m);
        }
        return rows;
    }

    const std::string sft_ckpt = ensure_sft_checkpoint();
    const Vocabulary v = Vocabulary::make_default();
    const CheckpointData ckpt = load_checkpoint(sft_ckpt, v);

    MaskPredictor policy = ckpt.make_model();
    const MaskPredictor ref = ckpt.make_model();
    RunConfig cfg = rl_base_config();
    cfg.rl.strategy = strategy;
    cfg.rl.noise_mode = mode;
    AdamState adam(policy, cfg.rl.lr);

    const std::vector<TaskInstance> pool = make_task_pool(cfg, v, kRLPoolSeed, kRLPoolSize);
    const TaskSource source = [&pool](Rng& rng) {
        return pool[uniform_below(rng, pool.size())];
    };
    unigrpo_train(policy, ref, adam, source,
                  RewardSpec::defaults_for(RewardTaskKind::TEXT_REASONING),
                  ScorerRegistry::with_defaults(), cfg.rl, cfg.sampler, v, kRLOuterSteps, seed,
                  [&](const RLStepMetrics& m) { rows.push_back(m); });

    save_checkpoint(fixture_dir() + "/" + rl_run_tag(strategy, mode, seed) + "_policy.bin", policy,
                    v, Stage::RL, kRLOuterSteps);
    std::ofstream out(cache, std::ios::trunc);
    out << kRLMetricsHeader << "\n";
    for (const auto& m : rows) {
        out << format_rl_row(m) << "\n";
    }
    return rows;
}

/// Mean group reward of a policy over kEvalGroups rollout groups on the
/// training split (the same statistic a metrics row reports, averaged).
double eval_mean_group_reward(const MaskPredictor& policy, const Vocabulary& v) {
    const RunConfig cfg = rl_base_config();
    const std::vector<TaskInstance> pool = make_task_pool(cfg, v, kRLPoolSeed, kRLPoolSize);
    const RewardSpec spec = RewardSpec::defaults_for(RewardTaskKind::TEXT_REASONING);
    const ScorerRegistry registry = ScorerRegistry::with_defaults();

    double total = 0.0;
    for (int g = 0; g < kEvalGroups; ++g) {
        Rng task_rng = derive_rng(515151, "eval.task", static_cast<uint64_t>(g));
        const TaskInstance& task = pool[uniform_below(task_rng, pool.size())];
        Rng rollout_rng = derive_rng(525252, "eval.rollout", static_cast<uint64_t>(g));
        const RolloutGroup group =
            sample_group(policy, task.prompt, cfg.rl.group_size, v, cfg.sampler, rollout_rng);
        ScoreContext ctx;
        ctx.vocab = &v;
        ctx.gold_answer = task.gold_answer;
        ctx.prompt_text = task.prompt_text;
        double group_total = 0.0;
        for (const auto& o : group.completions) {
            group_total += composite_reward(spec, registry, o, ctx);
        }
        total += group_total / static_cast<double>(group.completions.size());
    }
    return total / static_cast<double>(kEvalGroups);
}

/// First outer step whose trailing-20 mean reward reaches the threshold
/// (full windows only, so a lucky opening draw cannot trigger it).
int steps_to_threshold(const std::vector<RLStepMetrics>& rows, double threshold) {
    constexpr size_t kWindow = 20;
    double acc = 0.0;
    for (size_t i = 0; i < rows.size(); ++i) {
        acc += rows[i].mean_reward;
        if (i >= kWindow) {
            acc -= rows[i - kWindow].mean_reward;
        }
        if (i + 1 >= kWindow && acc / static_cast<double>(kWindow) >= threshold) {
            return static_cast<int>(i);
        }
    }
    return static_cast<int>(rows.size()) + 1;  // never reached
}

double trailing_reward_variance(const std::vector<RLStepMetrics>& rows, size_t window) {
    const size_t n = std::min(window, rows.size());
    double mean = 0.0;
    for (size_t i = rows.size() - n; i < rows.size(); ++i) {
        mean += rows[i].mean_reward;
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t i = rows.size() - n; i < rows.size(); ++i) {
        var += (rows[i].mean_reward - mean) * (rows[i].mean_reward - mean);
    }
    return var / static_cast<double>(n);
}

// ---- criterion 7: RL improvement -----------------------------------------

void criterion_rl_improvement(Checker& check) {
    const auto start = std::chrono::steady_clock::now();
    const Vocabulary v = Vocabulary::make_default();

    // The step-0 baseline is the initial policy's mean group reward. A
    // single 4-sample group is far too noisy an estimate of it, so both the
    // baseline and the post-training level are measured as the same
    // statistic averaged over kEvalGroups rollout groups.
    const std::string sft_ckpt = ensure_sft_checkpoint();
    const CheckpointData sft = load_checkpoint(sft_ckpt, v);
    const MaskPredictor initial = sft.make_model();
    const double baseline = eval_mean_group_reward(initial, v);
    check.note("baseline", baseline);

    int improved = 0;
    std::ostringstream per_seed;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        rl_rows(Strategy::UNIGRPO, NoiseMode::STRUCTURED, seed);  // train (or reuse cache)
        const CheckpointData trained = load_checkpoint(
            fixture_dir() + "/" + rl_run_tag(Strategy::UNIGRPO, NoiseMode::STRUCTURED, seed) +
                "_policy.bin",
            v);
        const MaskPredictor policy = trained.make_model();
        const double final_reward = eval_mean_group_reward(policy, v);
        per_seed << "s" << seed << ":" << final_reward << " ";
        improved += final_reward > baseline ? 1 : 0;
    }
    check.note("final", per_seed.str());
    check.note("improved", improved);
    check.require(improved >= 4, "reward failed to rise above the step-0 baseline in 4/5 seeds");

    const double secs = elapsed_since(start);
    check.require(secs < 1800.0, "runtime over 30 minutes");
}

// ---- criterion 8: ablation direction --------------------------------------

void criterion_ablation_direction(Checker& check) {
    std::vector<double> uni_steps, d1_steps;
    std::vector<double> structured_var, random_var;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        const auto uni = rl_rows(Strategy::UNIGRPO, NoiseMode::STRUCTURED, seed);
        const auto d1 = rl_rows(Strategy::D1, NoiseMode::STRUCTURED, seed);
        const auto rnd = rl_rows(Strategy::UNIGRPO, NoiseMode::RANDOM, seed);
        uni_steps.push_back(steps_to_threshold(uni, kRewardThreshold));
        d1_steps.push_back(steps_to_threshold(d1, kRewardThreshold));
        structured_var.push_back(trailing_reward_variance(uni, 100));
        random_var.push_back(trailing_reward_variance(rnd, 100));
    }
    const double uni_median = median(uni_steps);
    const double d1_median = median(d1_steps);
    check.note("steps_to_threshold_unigrpo", uni_median);
    check.note("steps_to_threshold_d1", d1_median);
    check.require(uni_median <= d1_median,
                  "structured noising needed more steps than d1 to reach the threshold");

    const double med_structured = median(structured_var);
    const double med_random = median(random_var);
    check.note("var_structured", med_structured);
    check.note("var_random", med_random);
    check.require(med_random > med_structured,
                  "random timesteps did not show higher reward variance");
}

// ---- criterion 10: reproducibility ----------------------------------------

void criterion_reproducibility(Checker& check) {
    const std::string root = fixture_dir() + "/repro";
    fs::remove_all(root);
    fs::create_directories(root);
    ::setenv("UDLM_OUTPUT_ROOT", root.c_str(), 1);

    RunConfig cfg = rl_base_config();
    cfg.stage = RunStage::PRETRAIN;
    cfg.steps = 14;
    cfg.batch_size = 4;
    cfg.train.ckpt_interval = 7;
    cfg.train.probe_interval = 7;
    cfg.train.probe_size = 2;
    cfg.model = ModelConfig{1, 16, 2, 32, 96, 0, 0.1};

    cfg.output_dir = "a";
    const std::string dir_a = run_stage(cfg);
    cfg.output_dir = "b";
    const std::string dir_b = run_stage(cfg);
    const std::string metrics_a = read_file(dir_a + "/metrics.csv");
    check.require(!metrics_a.empty(), "pretrain metrics missing");
    check.require(metrics_a == read_file(dir_b + "/metrics.csv"),
                  "identical (config, seed) pretrain runs diverged");

    // resume in place from the midpoint checkpoint
    cfg.output_dir = "a";
    const std::string resumed = run_stage(cfg, dir_a + "/ckpt/step_000007.bin");
    check.require(read_file(resumed + "/metrics.csv") == metrics_a,
                  "pretrain resume changed the metrics file");

    // the same properties for an RL stage
    const Vocabulary v = Vocabulary::make_default();
    ModelConfig mc = cfg.model;
    mc.vocab_size = v.total_size();
    Rng rng = make_rng(7);
    MaskPredictor model(mc, rng);
    const std::string sft_path = root + "/sft_seed.bin";
    save_checkpoint(sft_path, model, v, Stage::SFT, 0);

    RunConfig rl = cfg;
    rl.stage = RunStage::RL;
    rl.steps = 8;
    rl.train.ckpt_interval = 4;
    rl.rl.group_size = 2;
    rl.rl.mu = 1;
    rl.sampler.length = 12;
    rl.sampler.steps = 6;
    rl.sampler.block_size = 12;
    rl.sampler.unmask_k = 2;
    rl.sampler.temperature = 1.0;
    rl.task.response_len = 0;

    rl.output_dir = "rl_a";
    const std::string rl_a = run_stage(rl, sft_path);
    rl.output_dir = "rl_b";
    const std::string rl_b = run_stage(rl, sft_path);
    const std::string rl_metrics = read_file(rl_a + "/metrics.csv");
    check.require(!rl_metrics.empty(), "rl metrics missing");
    check.require(rl_metrics == read_file(rl_b + "/metrics.csv"),
                  "identical (config, seed) RL runs diverged");

    rl.output_dir = "rl_a";
    const std::string rl_resumed = run_stage(rl, rl_a + "/ckpt/step_000004.bin");
    check.require(read_file(rl_resumed + "/metrics.csv") == rl_metrics,
                  "RL resume changed the metrics file");

    ::unsetenv("UDLM_OUTPUT_ROOT");
}

}  // namespace

std::string fixture_dir() {
    const char* env = std::getenv("UDLM_ACCEPT_CACHE");
    const std::string dir = env && *env ? env : "acceptance_fixtures";
    fs::create_directories(dir);
    return dir;
}

std::vector<Criterion> training_criteria() {
    return {
        {4, "overfit reconstruction and inpainting recovery", criterion_overfit},
        {7, "RL raises mean group reward over the step-0 baseline", criterion_rl_improvement},
        {8, "ablation direction: structured noising vs d1 and random timesteps",
         criterion_ablation_direction},
        {10, "byte-identical reproducibility incl. checkpoint resume", criterion_reproducibility},
    };
}

std::vector<Criterion> all_criteria() {
    std::vector<Criterion> out = analytic_criteria();
    const auto training = training_criteria();
    out.insert(out.end(), training.begin(), training.end());
    std::sort(out.begin(), out.end(),
              [](const Criterion& a, const Criterion& b) { return a.id < b.id; });
    return out;
}

}  // namespace acceptance
