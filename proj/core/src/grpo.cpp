#include "udlm/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace udlm {

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::UNIGRPO: return "unigrpo";
        case Strategy::D1: return "d1";
        case Strategy::LLADA: return "llada";
    }
    return "?";
}

void UniGRPOConfig::validate() const {
    if (group_size < 2) {
        throw std::invalid_argument("unigrpo config: group_size must be >= 2");
    }
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("unigrpo config: epsilon must be > 0");
    }
    if (beta < 0.0) {
        throw std::invalid_argument("unigrpo config: beta must be >= 0");
    }
    if (mu < 1 || diffusion_steps < mu) {
        throw std::invalid_argument("unigrpo config: need diffusion_steps >= mu >= 1");
    }
    if (llada_samples < 1) {
        throw std::invalid_argument("unigrpo config: llada_samples must be >= 1");
    }
}

NoisePlan noise_plan_from_start(int T, int mu, int t1) {
    if (mu < 1 || T < mu) {
        throw std::invalid_argument("noise plan: need T >= mu >= 1");
    }
    if (t1 < 0 || t1 > T) {
        throw std::invalid_argument("noise plan: t1 out of [0, T]");
    }
    NoisePlan plan;
    plan.T = T;
    plan.mu = mu;
    plan.t_list.resize(static_cast<size_t>(mu));
    plan.t_list[0] = t1;
    for (int n = 2; n <= mu; ++n) {
        plan.t_list[static_cast<size_t>(n - 1)] = static_cast<int>(std::floor(
            static_cast<double>(n - 1) / static_cast<double>(mu - 1) * static_cast<double>(T - t1) +
            static_cast<double>(t1)));
    }
    return plan;
}

NoisePlan make_noise_plan(int T, int mu, Rng& rng) {
    const int t1 = static_cast<int>(std::floor(u01(rng) * static_cast<double>(T)));
    return noise_plan_from_start(T, mu, t1);
}

std::vector<double> compute_advantages(const std::vector<double>& rewards) {
    if (rewards.size() < 2) {
        throw std::invalid_argument("compute_advantages: need at least two rewards");
    }
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) {
        mean += r;
    }
    mean /= n;
    double var = 0.0;
    for (double r : rewards) {
        var += (r - mean) * (r - mean);
    }
    const double std_dev = std::sqrt(var / n);

    std::vector<double> adv(rewards.size(), 0.0);
    if (std_dev < 1e-8) {
        return adv;  // degenerate group: no preference signal
    }
    for (size_t i = 0; i < rewards.size(); ++i) {
        adv[i] = (rewards[i] - mean) / std_dev;
    }
    return adv;
}

RolloutGroup sample_group(const Predictor& policy_old, const LayoutSequence& q, int G,
                          const Vocabulary& v, const SamplerConfig& sampler_cfg, Rng& rng) {
    if (G < 2) {
        throw std::invalid_argument("sample_group: G must be >= 2");
    }
    RolloutGroup group;
    group.query = q;
    group.completions.reserve(static_cast<size_t>(G));
    for (int i = 0; i < G; ++i) {
        LayoutSequence full = semi_ar_generate(policy_old, q, v, sampler_cfg, rng);
        group.completions.push_back(full.slice(q.size(), full.size()));
    }
    return group;
}

MaskedSample rl_mask(const LayoutSequence& q, const LayoutSequence& o, double ratio,
                     const Vocabulary& v, Rng& rng) {
    LayoutSequence joint = q;
    joint.append(o);
    if (ratio <= 0.0) {
        return forward_mask_exact(joint, 1, MaskScope::RESPONSE_ONLY, v, rng);
    }
    return forward_mask(joint, std::min(ratio, 1.0), MaskScope::RESPONSE_ONLY, v, rng);
}

MaskedSample d1_mask(const LayoutSequence& q, const LayoutSequence& o, const Vocabulary& v,
                     Rng& rng) {
    LayoutSequence joint = q;
    joint.append(o);

    MaskedSample s;
    s.clean = joint;
    s.noisy = joint;
    const double question_ratio = u01(rng);
    for (size_t i = 0; i < q.size(); ++i) {
        if (u01(rng) < question_ratio) {
            s.mask_positions.push_back(i);
        }
    }
    for (size_t i = q.size(); i < joint.size(); ++i) {
        s.mask_positions.push_back(i);  // the whole answer, every call
    }
    s.t = static_cast<double>(s.mask_positions.size()) / static_cast<double>(joint.size());
    for (size_t i : s.mask_positions) {
        s.noisy.tokens[i] = v.mask_id();
    }
    return s;
}

TokenLogps loglik_on(const MaskPredictor& model, const MaskedSample& sample, ForwardCache* cache) {
    TokenLogps out;
    for (size_t pos : sample.mask_positions) {
        if (sample.clean.segment[pos] == Segment::RESPONSE) {
            out.positions.push_back(pos);
        }
    }
    if (out.positions.empty()) {
        throw std::invalid_argument("loglik_on: no masked response positions");
    }
    const Mat logits = model.forward(sample.noisy.tokens, cache);
    out.logp.reserve(out.positions.size());
    double total = 0.0;
    for (size_t pos : out.positions) {
        const double lp = log_softmax_at(logits.row(static_cast<Eigen::Index>(pos)),
                                         sample.clean.tokens[pos]);
        out.logp.push_back(lp);
        total += lp;
    }
    out.mean = total / static_cast<double>(out.positions.size());
    return out;
}

TokenLogps masked_loglik(const MaskPredictor& model, const LayoutSequence& q,
                         const LayoutSequence& o, int t_n, int T, const Vocabulary& v, Rng& rng) {
    if (T < 1 || t_n < 0 || t_n > T) {
        throw std::invalid_argument("masked_loglik: need 0 <= t_n <= T");
    }
    const MaskedSample sample =
        rl_mask(q, o, static_cast<double>(t_n) / static_cast<double>(T), v, rng);
    return loglik_on(model, sample);
}

TokenLogps baseline_d1_loglik(const MaskPredictor& model, const LayoutSequence& q,
                              const LayoutSequence& o, const Vocabulary& v, Rng& rng) {
    return loglik_on(model, d1_mask(q, o, v, rng));
}

double baseline_llada_loglik(const MaskPredictor& model, const LayoutSequence& q,
                             const LayoutSequence& o, int N, const Vocabulary& v, Rng& rng) {
    if (N < 1) {
        throw std::invalid_argument("baseline_llada_loglik: N must be >= 1");
    }
    double total = 0.0;
    long count = 0;
    for (int j = 0; j < N; ++j) {
        const double ratio = uniform_real(rng, 1e-12, 1.0);
        const TokenLogps lp = loglik_on(model, rl_mask(q, o, ratio, v, rng));
        for (double x : lp.logp) {
            total += x;
        }
        count += static_cast<long>(lp.logp.size());
    }
    return total / static_cast<double>(count);
}

double kl_k3(double logp_theta, double logp_ref) {
    const double d = logp_ref - logp_theta;
    return std::exp(d) - d - 1.0;
}

ObjectiveTerms unigrpo_objective(const std::vector<std::vector<double>>& lp_theta,
                                 const std::vector<std::vector<double>>& lp_old,
                                 const std::vector<std::vector<double>>& lp_ref,
                                 const std::vector<double>& advantages, double epsilon,
                                 double beta) {
    const size_t G = lp_theta.size();
    if (lp_old.size() != G || lp_ref.size() != G || advantages.size() != G || G == 0) {
        throw std::invalid_argument("unigrpo_objective: group size mismatch");
    }
    ObjectiveTerms out;
    out.dloss_dlogp.resize(G);

    double objective = 0.0;
    double kl_sum = 0.0;
    long token_count = 0;
    long clipped = 0;
    const double inv_g = 1.0 / static_cast<double>(G);

    for (size_t i = 0; i < G; ++i) {
        const size_t M = lp_theta[i].size();
        if (lp_old[i].size() != M || lp_ref[i].size() != M || M == 0) {
            throw std::invalid_argument("unigrpo_objective: token count mismatch in completion " +
                                        std::to_string(i));
        }
        const double a = advantages[i];
        const double inv_m = 1.0 / static_cast<double>(M);
        out.dloss_dlogp[i].assign(M, 0.0);

        double comp_obj = 0.0;
        for (size_t t = 0; t < M; ++t) {
            const double ratio = std::exp(lp_theta[i][t] - lp_old[i][t]);
            if (!std::isfinite(ratio)) {
                throw std::runtime_error(
                    "unigrpo_objective: non-finite ratio at completion " + std::to_string(i) +
                    " token " + std::to_string(t) + " (logp_theta=" + std::to_string(lp_theta[i][t]) +
                    ", logp_old=" + std::to_string(lp_old[i][t]) + ")");
            }
            const double clipped_ratio = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
            const double surrogate = std::min(ratio * a, clipped_ratio * a);
            const bool clip_active =
                (a > 0.0 && ratio > 1.0 + epsilon) || (a < 0.0 && ratio < 1.0 - epsilon);
            if (clip_active) {
                ++clipped;
            }

            const double d = lp_ref[i][t] - lp_theta[i][t];
            const double kl = std::exp(d) - d - 1.0;
            kl_sum += kl;
            ++token_count;

            comp_obj += inv_m * (surrogate - beta * kl);

            const double dsurrogate = clip_active ? 0.0 : ratio * a;
            const double dkl = 1.0 - std::exp(d);
            out.dloss_dlogp[i][t] = -inv_g * inv_m * (dsurrogate - beta * dkl);
        }
        objective += inv_g * comp_obj;
    }

    out.loss = -objective;
    out.mean_kl = kl_sum / static_cast<double>(token_count);
    out.clip_fraction = static_cast<double>(clipped) / static_cast<double>(token_count);
    return out;
}

namespace {

/// Per-(outer step, inner step, completion) mask stream, identical for the
/// three policies by construction.
Rng mask_stream(uint64_t seed, int step, int inner, size_t completion) {
    const uint64_t index = (static_cast<uint64_t>(step) << 24) ^
                           (static_cast<uint64_t>(inner) << 12) ^ static_cast<uint64_t>(completion);
    return derive_rng(seed, "rl.mask", index);
}

/// Apply dloss/dlogp at masked positions as logit gradients and backprop.
void backprop_token_grads(const MaskPredictor& model, const ForwardCache& cache,
                          const TokenLogps& lp, const MaskedSample& sample,
                          const std::vector<double>& dlogp, Params& grads) {
    // Rebuild logits from the cached final activations (cheaper than a
    // second full forward).
    const Mat logits = cache.lnf_out * model.params().tok_emb.transpose();
    Mat dlogits = Mat::Zero(logits.rows(), logits.cols());
    for (size_t t = 0; t < lp.positions.size(); ++t) {
        const auto r = static_cast<Eigen::Index>(lp.positions[t]);
        const double g = dlogp[t];
        if (g == 0.0) {
            continue;
        }
        const double m = logits.row(r).maxCoeff();
        Eigen::RowVectorXd p = (logits.row(r).array() - m).exp().matrix();
        p /= p.sum();
        dlogits.row(r) -= g * p;
        dlogits(r, sample.clean.tokens[lp.positions[t]]) += g;
    }
    model.backward(cache, dlogits, grads);
}

}  // namespace

void unigrpo_train(MaskPredictor& policy, const MaskPredictor& ref, AdamState& adam,
                   const TaskSource& task_source, const RewardSpec& reward_spec,
                   const ScorerRegistry& registry, const UniGRPOConfig& cfg,
                   const SamplerConfig& sampler_cfg, const Vocabulary& v, int outer_steps,
                   uint64_t seed, const MetricsSink& sink, int start_step) {
    cfg.validate();
    validate_reward_spec(reward_spec, registry);

    for (int step = start_step; step < outer_steps; ++step) {
        MaskPredictor old_policy = policy;  // frozen behaviour policy

        Rng task_rng = derive_rng(seed, "rl.task", static_cast<uint64_t>(step));
        Rng rollout_rng = derive_rng(seed, "rl.rollout", static_cast<uint64_t>(step));
        Rng noise_rng = derive_rng(seed, "rl.noise", static_cast<uint64_t>(step));

        const TaskInstance task = task_source(task_rng);
        RolloutGroup group =
            sample_group(old_policy, task.prompt, cfg.group_size, v, sampler_cfg, rollout_rng);

        ScoreContext ctx;
        ctx.vocab = &v;
        ctx.gold_answer = task.gold_answer;
        ctx.prompt_text = task.prompt_text;
        try {
            group.rewards.reserve(group.completions.size());
            for (const auto& completion : group.completions) {
                group.rewards.push_back(composite_reward(reward_spec, registry, completion, ctx));
            }
        } catch (const std::exception& e) {
            std::cerr << "unigrpo_train: reward scorer failed at step " << step << " (" << e.what()
                      << "); skipping group\n";
            continue;
        }
        group.advantages = compute_advantages(group.rewards);

        double mean_reward = 0.0;
        for (double r : group.rewards) {
            mean_reward += r;
        }
        mean_reward /= static_cast<double>(group.rewards.size());

        RLStepMetrics metrics;
        metrics.step = step;
        metrics.mean_reward = mean_reward;
        metrics.strategy = cfg.strategy;

        const bool all_zero = std::all_of(group.advantages.begin(), group.advantages.end(),
                                          [](double a) { return a == 0.0; });
        if (all_zero) {
            sink(metrics);
            continue;
        }

        NoisePlan plan;
        if (cfg.strategy == Strategy::UNIGRPO && cfg.noise_mode == NoiseMode::STRUCTURED) {
            plan = make_noise_plan(cfg.diffusion_steps, cfg.mu, noise_rng);
        }

        double kl_acc = 0.0, clip_acc = 0.0, loss_acc = 0.0;
        for (int inner = 1; inner <= cfg.mu; ++inner) {
            const size_t G = group.completions.size();
            std::vector<std::vector<double>> lp_theta(G), lp_old(G), lp_ref(G);
            std::vector<ForwardCache> caches(G);
            std::vector<MaskedSample> samples(G);
            std::vector<TokenLogps> theta_logps(G);

            // LLADA pools N draws per completion; the others use one mask.
            std::vector<std::vector<MaskedSample>> llada_samples(G);
            std::vector<std::vector<ForwardCache>> llada_caches(G);
            std::vector<std::vector<TokenLogps>> llada_theta(G);

            for (size_t i = 0; i < G; ++i) {
                Rng mask_rng = mask_stream(seed, step, inner, i);
                if (cfg.strategy == Strategy::LLADA) {
                    const int N = cfg.llada_samples;
                    double sum_theta = 0.0, sum_old = 0.0, sum_ref = 0.0;
                    long tokens = 0;
                    llada_samples[i].reserve(static_cast<size_t>(N));
                    for (int j = 0; j < N; ++j) {
                        const double ratio = uniform_real(mask_rng, 1e-12, 1.0);
                        MaskedSample s = rl_mask(group.query, group.completions[i], ratio, v, mask_rng);
                        llada_caches[i].emplace_back();
                        TokenLogps th = loglik_on(policy, s, &llada_caches[i].back());
                        TokenLogps ol = loglik_on(old_policy, s);
                        TokenLogps rf = loglik_on(ref, s);
                        for (size_t t = 0; t < th.logp.size(); ++t) {
                            sum_theta += th.logp[t];
                            sum_old += ol.logp[t];
                            sum_ref += rf.logp[t];
                        }
                        tokens += static_cast<long>(th.logp.size());
                        llada_theta[i].push_back(std::move(th));
                        llada_samples[i].push_back(std::move(s));
                    }
                    // one pooled sequence-level estimate per completion
                    lp_theta[i] = {sum_theta / static_cast<double>(tokens)};
                    lp_old[i] = {sum_old / static_cast<double>(tokens)};
                    lp_ref[i] = {sum_ref / static_cast<double>(tokens)};
                    continue;
                }

                MaskedSample sample =
                    cfg.strategy == Strategy::D1
                        ? d1_mask(group.query, group.completions[i], v, mask_rng)
                        : rl_mask(group.query, group.completions[i],
                                  [&] {
                                      int t_n = 0;
                                      if (cfg.noise_mode == NoiseMode::STRUCTURED) {
                                          t_n = plan.t_list[static_cast<size_t>(inner - 1)];
                                      } else {
                                          t_n = static_cast<int>(std::floor(
                                              u01(mask_rng) * static_cast<double>(cfg.diffusion_steps)));
                                      }
                                      return static_cast<double>(t_n) /
                                             static_cast<double>(cfg.diffusion_steps);
                                  }(),
                                  v, mask_rng);
                theta_logps[i] = loglik_on(policy, sample, &caches[i]);
                lp_theta[i] = theta_logps[i].logp;
                lp_old[i] = loglik_on(old_policy, sample).logp;
                lp_ref[i] = loglik_on(ref, sample).logp;
                samples[i] = std::move(sample);
            }

            const ObjectiveTerms terms =
                unigrpo_objective(lp_theta, lp_old, lp_ref, group.advantages, cfg.epsilon, cfg.beta);

            Params grads = policy.zero_like();
            for (size_t i = 0; i < G; ++i) {
                if (cfg.strategy == Strategy::LLADA) {
                    long total_tokens = 0;
                    for (const auto& th : llada_theta[i]) {
                        total_tokens += static_cast<long>(th.logp.size());
                    }
                    const double g_each = terms.dloss_dlogp[i][0] / static_cast<double>(total_tokens);
                    for (size_t j = 0; j < llada_samples[i].size(); ++j) {
                        const std::vector<double> dlogp(llada_theta[i][j].logp.size(), g_each);
                        backprop_token_grads(policy, llada_caches[i][j], llada_theta[i][j],
                                             llada_samples[i][j], dlogp, grads);
                    }
                } else {
                    backprop_token_grads(policy, caches[i], theta_logps[i], samples[i],
                                         terms.dloss_dlogp[i], grads);
                }
            }
            adam.step(policy, grads);

            kl_acc += terms.mean_kl;
            clip_acc += terms.clip_fraction;
            loss_acc += terms.loss;
        }

        metrics.kl = kl_acc / cfg.mu;
        metrics.clip_fraction = clip_acc / cfg.mu;
        metrics.loss = loss_acc / cfg.mu;
        sink(metrics);
    }
}

}  // namespace udlm
