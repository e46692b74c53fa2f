#pragma once

#include <functional>
#include <string>
#include <vector>

#include "udlm/diffusion.hpp"
#include "udlm/model.hpp"
#include "udlm/rewards.hpp"
#include "udlm/sampler.hpp"
#include "udlm/tasks.hpp"

namespace udlm {

/// Likelihood strategy used by the RL loop. UNIGRPO applies structured
/// noising over a NoisePlan; D1 masks the whole answer plus a random part
/// of the question; LLADA pools a Monte-Carlo set of mask draws into one
/// sequence-level estimate.
enum class Strategy { UNIGRPO, D1, LLADA };
enum class NoiseMode { STRUCTURED, RANDOM };

const char* strategy_name(Strategy s);

struct UniGRPOConfig {
    int group_size = 4;        // G
    int mu = 4;                // inner gradient updates per outer step
    double epsilon = 0.2;      // clip range
    double beta = 0.01;        // KL weight
    int diffusion_steps = 1000;  // T
    double lr = 3e-4;
    Strategy strategy = Strategy::UNIGRPO;
    NoiseMode noise_mode = NoiseMode::STRUCTURED;
    int llada_samples = 8;     // Monte-Carlo draws for LLADA

    void validate() const;
};

/// Inner-update timesteps: a random start t_1 = floor(r1*T), then the
/// remaining updates uniformly spaced over [t_1, T]:
/// t_n = floor(((n-1)/(mu-1)) * (T - t_1) + t_1).
struct NoisePlan {
    int T = 0;
    int mu = 0;
    std::vector<int> t_list;
};

NoisePlan noise_plan_from_start(int T, int mu, int t1);
NoisePlan make_noise_plan(int T, int mu, Rng& rng);

/// Group-relative advantages (r_i - mean) / std with population std; a
/// group whose rewards have std below 1e-8 yields all zeros and moves the
/// policy nowhere.
std::vector<double> compute_advantages(const std::vector<double>& rewards);

struct RolloutGroup {
    LayoutSequence query;
    std::vector<LayoutSequence> completions;  // responses only, MASK-free
    std::vector<double> rewards;
    std::vector<double> advantages;
};

/// G completions from the frozen behaviour policy; they stay fixed for the
/// rest of the outer step.
RolloutGroup sample_group(const Predictor& policy_old, const LayoutSequence& q, int G,
                          const Vocabulary& v, const SamplerConfig& sampler_cfg, Rng& rng);

/// Corrupt the response of [q, o] at the given ratio with q always
/// unmasked. ratio <= 0 masks exactly one response token (the estimator
/// needs at least one).
MaskedSample rl_mask(const LayoutSequence& q, const LayoutSequence& o, double ratio,
                     const Vocabulary& v, Rng& rng);

/// d1-style corruption: every answer token masked, question tokens masked
/// independently at a ratio drawn from U(0,1).
MaskedSample d1_mask(const LayoutSequence& q, const LayoutSequence& o, const Vocabulary& v,
                     Rng& rng);

struct TokenLogps {
    std::vector<size_t> positions;  // masked response positions (absolute)
    std::vector<double> logp;
    double mean = 0.0;
};

/// log p(target | masked input) at every masked response position of the
/// sample, plus their mean. Policies compared within an inner step must be
/// evaluated on the same MaskedSample (shared-mask contract).
TokenLogps loglik_on(const MaskPredictor& model, const MaskedSample& sample,
                     ForwardCache* cache = nullptr);

TokenLogps masked_loglik(const MaskPredictor& model, const LayoutSequence& q,
                         const LayoutSequence& o, int t_n, int T, const Vocabulary& v, Rng& rng);

TokenLogps baseline_d1_loglik(const MaskPredictor& model, const LayoutSequence& q,
                              const LayoutSequence& o, const Vocabulary& v, Rng& rng);

/// Monte-Carlo estimate over N independent mask ratios: masked log-probs
/// pooled across draws and averaged.
double baseline_llada_loglik(const MaskPredictor& model, const LayoutSequence& q,
                             const LayoutSequence& o, int N, const Vocabulary& v, Rng& rng);

/// Clipped-surrogate objective with per-token KL (k3 estimator, see below),
/// aggregated sample-level: mean over each completion's masked tokens, then
/// mean over the group. `loss` is the negated objective. dloss_dlogp feeds
/// the policy backward pass.
struct ObjectiveTerms {
    double loss = 0.0;
    double mean_kl = 0.0;
    double clip_fraction = 0.0;
    std::vector<std::vector<double>> dloss_dlogp;
};

ObjectiveTerms unigrpo_objective(const std::vector<std::vector<double>>& lp_theta,
                                 const std::vector<std::vector<double>>& lp_old,
                                 const std::vector<std::vector<double>>& lp_ref,
                                 const std::vector<double>& advantages, double epsilon,
                                 double beta);

/// Non-negative per-token KL estimate exp(d) - d - 1 with
/// d = logp_ref - logp_theta.
double kl_k3(double logp_theta, double logp_ref);

struct RLStepMetrics {
    int step = 0;
    double mean_reward = 0.0;
    double kl = 0.0;
    double clip_fraction = 0.0;
    double loss = 0.0;
    Strategy strategy = Strategy::UNIGRPO;
};

using MetricsSink = std::function<void(const RLStepMetrics&)>;
using TaskSource = std::function<TaskInstance(Rng&)>;

/// Outer loop of the policy-gradient optimization: snapshot the behaviour
/// policy, roll out a group, score and normalize rewards, then run mu inner
/// updates on the chosen likelihood strategy. Emits one metrics row per
/// outer step; groups whose reward scorer throws are skipped and logged.
void unigrpo_train(MaskPredictor& policy, const MaskPredictor& ref, AdamState& adam,
                   const TaskSource& task_source, const RewardSpec& reward_spec,
                   const ScorerRegistry& registry, const UniGRPOConfig& cfg,
                   const SamplerConfig& sampler_cfg, const Vocabulary& v, int outer_steps,
                   uint64_t seed, const MetricsSink& sink, int start_step = 0);

}  // namespace udlm
