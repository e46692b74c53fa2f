// Criteria 1, 2, 3, 5, 6, 9: analytic oracles, contract sweeps, estimator
// convergence. The training-based criteria live in criteria_training.cpp.

#include <chrono>
#include <cmath>
#include <functional>

#include "../helpers.hpp"
#include "acceptance.hpp"
#include "udlm/diffusion.hpp"
#include "udlm/grpo.hpp"
#include "udlm/objectives.hpp"
#include "udlm/sampler.hpp"
#include "udlm/tasks.hpp"

namespace acceptance {

using namespace udlm;
using udlm::testing::HashPredictor;
using udlm::testing::random_text;
using udlm::testing::tiny_vocab;

namespace {

double elapsed_since(const std::chrono::steady_clock::time_point& start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ModelConfig grad_check_config(const Vocabulary& v) {
    ModelConfig cfg;
    cfg.layers = 1;
    cfg.model_dim = 8;
    cfg.heads = 2;
    cfg.ffn_dim = 12;
    cfg.max_len = 16;
    cfg.vocab_size = v.total_size();
    cfg.prompt_dropout = 0.0;
    return cfg;
}

// ---- criterion 1 ---------------------------------------------------------

void criterion_gradient_fidelity(Checker& check) {
    const auto start = std::chrono::steady_clock::now();
    const Vocabulary v = tiny_vocab();

    double worst = 0.0;
    for (int draw = 0; draw < 100; ++draw) {
        Rng rng = make_rng(1000 + static_cast<uint64_t>(draw));
        MaskPredictor model(grad_check_config(v), rng);
        if (draw == 0) {
            check.require(model.param_count() <= 1000, "model exceeds 1k parameters");
            check.note("params", model.param_count());
        }

        const size_t p_len = 2 + uniform_below(rng, 4);
        const size_t r_len = 3 + uniform_below(rng, 6);
        LayoutSequence x0 = random_text(v, p_len, rng, Segment::PROMPT);
        x0.append(random_text(v, r_len, rng, Segment::RESPONSE));
        const double t = uniform_real(rng, 0.05, 1.0);

        // alternate between the unified (ALL) and mixed-SFT (RESPONSE_ONLY)
        // corruption scopes
        const MaskScope scope = draw % 2 == 0 ? MaskScope::ALL : MaskScope::RESPONSE_ONLY;
        const MaskedSample sample = forward_mask(x0, t, scope, v, rng);

        Params grads = model.zero_like();
        masked_ce_loss(model, sample, &grads);
        const double rel = udlm::testing::fd_relative_error(
            model, [&](const MaskPredictor& m) { return masked_ce_loss(m, sample).value; }, grads);
        worst = std::max(worst, rel);
    }
    check.note("max_rel_err", worst);
    check.require(worst < 1e-4, "gradient relative error >= 1e-4");

    const double secs = elapsed_since(start);
    check.require(secs < 60.0, "runtime over 1 minute");
}

// ---- criterion 2 ---------------------------------------------------------

TransitionSpec random_spec(int K, int T, Rng& rng) {
    TransitionSpec spec;
    spec.K = K;
    for (int s = 0; s < T; ++s) {
        const double a = u01(rng);
        const double g = u01(rng) * (1.0 - a);
        spec.alpha.push_back(a);
        spec.gamma.push_back(g);
        spec.beta.push_back((1.0 - a - g) / K);
    }
    return spec;
}

/// Posterior by full trajectory enumeration (independent of the closed-form
/// product formula).
Eigen::VectorXd enumerated_posterior(int x_t, int x_0, const TransitionSpec& spec, int step) {
    const int states = spec.K + 1;
    std::vector<Eigen::MatrixXd> Q;
    for (int s = 1; s <= step; ++s) {
        Q.push_back(build_transition_matrix(spec, s));
    }
    Eigen::VectorXd joint = Eigen::VectorXd::Zero(states);
    std::vector<int> path(static_cast<size_t>(step + 1));
    path[0] = x_0;
    std::function<void(int, double)> walk = [&](int depth, double prob) {
        if (prob == 0.0) {
            return;
        }
        if (depth == step) {
            if (path[static_cast<size_t>(step)] == x_t) {
                joint(path[static_cast<size_t>(step - 1)]) += prob;
            }
            return;
        }
        for (int next = 0; next < states; ++next) {
            path[static_cast<size_t>(depth + 1)] = next;
            walk(depth + 1, prob * Q[static_cast<size_t>(depth)](next, path[static_cast<size_t>(depth)]));
        }
    };
    walk(0, 1.0);
    const double total = joint.sum();
    return total > 0.0 ? Eigen::VectorXd(joint / total) : joint;
}

void criterion_diffusion_oracles(Checker& check) {
    const auto start = std::chrono::steady_clock::now();
    Rng rng = make_rng(2024);

    // analytic: marginal kernel against independent distribution evolution,
    // posterior against brute-force Bayes over full path enumeration
    double worst_marginal = 0.0, worst_posterior = 0.0;
    for (int K = 2; K <= 4; ++K) {
        for (int T = 2; T <= 5; ++T) {
            const TransitionSpec spec = random_spec(K, T, rng);
            const int states = K + 1;
            for (int n = 0; n < states; ++n) {
                // evolve a one-hot distribution step by step
                Eigen::VectorXd dist = Eigen::VectorXd::Zero(states);
                dist(n) = 1.0;
                for (int s = 1; s <= T; ++s) {
                    dist = (build_transition_matrix(spec, s) * dist).eval();
                }
                const Eigen::MatrixXd Qbar = marginal_transition(spec, T);
                for (int m = 0; m < states; ++m) {
                    worst_marginal = std::max(worst_marginal, std::abs(Qbar(m, n) - dist(m)));
                }
            }
            for (int x0 = 0; x0 < states; ++x0) {
                const Eigen::MatrixXd Qbar = marginal_transition(spec, T);
                for (int xt = 0; xt < states; ++xt) {
                    if (Qbar(xt, x0) <= 1e-14) {
                        continue;
                    }
                    const Eigen::VectorXd got = posterior(xt, x0, spec, T);
                    const Eigen::VectorXd want = enumerated_posterior(xt, x0, spec, T);
                    worst_posterior =
                        std::max(worst_posterior, (got - want).cwiseAbs().maxCoeff());
                }
            }
        }
    }
    check.note("marginal_abs_err", worst_marginal);
    check.note("posterior_abs_err", worst_posterior);
    check.require(worst_marginal < 1e-10, "marginal enumeration mismatch");
    check.require(worst_posterior < 1e-10, "posterior enumeration mismatch");

    // Monte-Carlo: 1e6 simulated trajectories of the K=4, T=5 chain
    const int K = 4, T = 5;
    const TransitionSpec spec = random_spec(K, T, rng);
    const Eigen::MatrixXd Qbar = marginal_transition(spec, T);
    std::vector<Eigen::MatrixXd> Q;
    for (int s = 1; s <= T; ++s) {
        Q.push_back(build_transition_matrix(spec, s));
    }
    const int trials = 200000;  // per start state; 1e6 total
    int violations = 0;
    for (int x0 = 0; x0 <= K; ++x0) {
        std::vector<long> counts(static_cast<size_t>(K + 1), 0);
        for (int trial = 0; trial < trials; ++trial) {
            int state = x0;
            for (int s = 0; s < T; ++s) {
                const double u = u01(rng);
                double acc = 0.0;
                for (int next = 0; next <= K; ++next) {
                    acc += Q[static_cast<size_t>(s)](next, state);
                    if (u < acc) {
                        state = next;
                        break;
                    }
                }
            }
            ++counts[static_cast<size_t>(state)];
        }
        for (int m = 0; m <= K; ++m) {
            const double p = Qbar(m, x0);
            const double phat = static_cast<double>(counts[static_cast<size_t>(m)]) / trials;
            const double sigma = std::sqrt(std::max(p * (1.0 - p), 1e-12) / trials);
            if (std::abs(phat - p) > 3.0 * sigma + 1e-9) {
                ++violations;
            }
        }
    }
    check.note("mc_violations", violations);
    check.require(violations == 0, "Monte-Carlo 3-sigma violation");

    const double secs = elapsed_since(start);
    check.require(secs < 120.0, "runtime over 2 minutes");
}

// ---- criterion 3 ---------------------------------------------------------

void criterion_closed_form_loss(Checker& check) {
    const Vocabulary v = Vocabulary::make_default();
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.model_dim = 16;
    cfg.heads = 2;
    cfg.ffn_dim = 32;
    cfg.max_len = 64;
    cfg.vocab_size = v.total_size();
    cfg.prompt_dropout = 0.0;
    const MaskPredictor uniform(cfg);  // zero parameters: exactly uniform logits
    const double ln_v = std::log(static_cast<double>(v.total_size()));

    Rng rng = make_rng(33);
    double worst = 0.0;
    for (int draw = 0; draw < 50; ++draw) {
        LayoutSequence x0 = random_text(v, 4 + uniform_below(rng, 8), rng, Segment::PROMPT);
        x0.append(random_text(v, 6 + uniform_below(rng, 20), rng, Segment::RESPONSE));
        const double t = sample_mask_ratio(rng);
        const MaskScope scope = draw % 2 == 0 ? MaskScope::ALL : MaskScope::RESPONSE_ONLY;
        const MaskedSample sample = forward_mask(x0, t, scope, v, rng);
        const LossReport report = masked_ce_loss(uniform, sample);
        const double want =
            (1.0 / t) * static_cast<double>(sample.mask_positions.size()) * ln_v;
        worst = std::max(worst, std::abs(report.value - want));
    }
    check.note("max_abs_err", worst);
    check.require(worst <= 1e-9, "closed-form loss deviates by more than 1e-9");
}

// ---- criterion 5 ---------------------------------------------------------

struct SweepMonitor : Predictor {
    const Predictor& inner;
    const Vocabulary& vocab;
    size_t tracked_len;
    mutable std::vector<int> last;
    mutable bool commit_violated = false;
    mutable int calls = 0;

    SweepMonitor(const Predictor& p, const Vocabulary& v, size_t len)
        : inner(p), vocab(v), tracked_len(len) {}

    Mat logits(const std::vector<int>& tokens) const override {
        // ignore the unconditional guidance pass, which starts with
        // NULL_PROMPT (and can coincide in length when the prompt is short)
        const bool conditional = tokens[0] != vocab.special_id(Special::NULL_PROMPT);
        if (tokens.size() == tracked_len && conditional) {
            ++calls;
            if (!last.empty()) {
                for (size_t i = 0; i < tokens.size(); ++i) {
                    if (last[i] != vocab.mask_id() && last[i] != tokens[i]) {
                        commit_violated = true;
                    }
                }
            }
            last = tokens;
        }
        return inner.logits(tokens);
    }
};

void criterion_sampler_contracts(Checker& check) {
    const Vocabulary v = Vocabulary::make_default();
    Rng rng = make_rng(55);
    int violations = 0;
    std::string first_violation;

    const auto run_case = [&](const SamplerConfig& cfg, const LayoutSequence& prompt,
                              bool semi_ar, uint64_t seed, const std::string& label) {
        const HashPredictor base(v.total_size(), seed);
        SweepMonitor monitor(base, v, prompt.size() + static_cast<size_t>(cfg.length));
        Rng sample_rng = make_rng(seed ^ 0x5eedull);
        LayoutSequence out;
        try {
            out = semi_ar ? semi_ar_generate(monitor, prompt, v, cfg, sample_rng)
                          : parallel_generate(monitor, prompt, v, cfg, sample_rng);
        } catch (const std::exception& e) {
            ++violations;
            if (first_violation.empty()) {
                first_violation = label + ": threw " + e.what();
            }
            return out;
        }
        bool ok = true;
        ok &= out.size() == prompt.size() + static_cast<size_t>(cfg.length);
        for (size_t i = 0; i < prompt.size(); ++i) {
            ok &= out.tokens[i] == prompt.tokens[i];
        }
        ok &= !out.contains(v.mask_id());
        ok &= !monitor.commit_violated;
        ok &= !out.validate(v).has_value();
        if (cfg.unmask_rule == UnmaskRule::FIXED_K) {
            ok &= monitor.calls == cfg.steps;  // exactly S denoising steps
        } else {
            ok &= monitor.calls <= cfg.steps;
        }
        if (!ok) {
            ++violations;
            if (first_violation.empty()) {
                first_violation = label;
            }
        }
        return out;
    };

    for (int case_id = 0; case_id < 1000; ++case_id) {
        const uint64_t seed = 7000 + static_cast<uint64_t>(case_id);
        const size_t p_len = 1 + uniform_below(rng, 8);
        const LayoutSequence prompt = random_text(v, p_len, rng, Segment::PROMPT);

        SamplerConfig cfg;
        cfg.temperature = case_id % 3 == 0 ? 0.7 : 0.0;
        cfg.guidance_scale = case_id % 5 == 0 ? 3.5 : 0.0;
        cfg.response_modality = case_id % 2 == 0 ? Modality::TEXT : Modality::IMAGE;

        const int mode = static_cast<int>(uniform_below(rng, 3));
        if (mode == 0) {
            // semi-AR: random factorization N = blocks*B, B = k*steps_per_block
            const int k = 1 + static_cast<int>(uniform_below(rng, 4));
            const int steps_per_block = 1 + static_cast<int>(uniform_below(rng, 5));
            const int blocks = 1 + static_cast<int>(uniform_below(rng, 4));
            cfg.block_size = k * steps_per_block;
            cfg.length = blocks * cfg.block_size;
            cfg.unmask_k = k;
            cfg.unmask_rule = UnmaskRule::FIXED_K;
            cfg.steps = cfg.length / k;
            run_case(cfg, prompt, true, seed, "semi_ar case " + std::to_string(case_id));
        } else if (mode == 1) {
            const int k = 1 + static_cast<int>(uniform_below(rng, 4));
            const int steps = 1 + static_cast<int>(uniform_below(rng, 16));
            cfg.length = k * steps;
            cfg.steps = steps;
            cfg.unmask_k = k;
            cfg.unmask_rule = UnmaskRule::FIXED_K;
            run_case(cfg, prompt, false, seed, "parallel fixed_k case " + std::to_string(case_id));
        } else {
            cfg.length = 2 + static_cast<int>(uniform_below(rng, 46));
            cfg.steps = 1 + static_cast<int>(uniform_below(rng, 24));
            cfg.unmask_rule = UnmaskRule::SCHEDULE_DERIVED;
            cfg.schedule_kind = case_id % 2 == 0 ? ScheduleKind::COSINE : ScheduleKind::LINEAR;
            run_case(cfg, prompt, false, seed, "parallel schedule case " + std::to_string(case_id));
        }

        // degenerate-block equivalence pair (tau=0, no guidance)
        if (case_id % 4 == 0) {
            SamplerConfig eq;
            const int k = 1 + static_cast<int>(uniform_below(rng, 3));
            const int steps = 1 + static_cast<int>(uniform_below(rng, 6));
            eq.length = k * steps;
            eq.block_size = eq.length;  // B = N
            eq.steps = steps;
            eq.unmask_k = k;
            eq.unmask_rule = UnmaskRule::FIXED_K;
            eq.schedule_kind = ScheduleKind::LINEAR;
            const HashPredictor pred(v.total_size(), seed ^ 0xabcdull);
            Rng ra = make_rng(1);
            Rng rb = make_rng(1);
            const LayoutSequence a = semi_ar_generate(pred, prompt, v, eq, ra);
            const LayoutSequence b = parallel_generate(pred, prompt, v, eq, rb);
            if (!(a.tokens == b.tokens)) {
                ++violations;
                if (first_violation.empty()) {
                    first_violation = "equivalence case " + std::to_string(case_id);
                }
            }
        }
    }

    // paper-anchored fixtures
    {
        // text: blocks of 64, 2 lowest-confidence per step, S = N/2 = 512
        SamplerConfig cfg;
        cfg.length = 1024;
        cfg.block_size = 64;
        cfg.unmask_k = 2;
        cfg.unmask_rule = UnmaskRule::FIXED_K;
        cfg.steps = 512;
        const LayoutSequence prompt = random_text(v, 4, rng, Segment::PROMPT);
        run_case(cfg, prompt, true, 424242, "paper text fixture");
    }
    {
        // image: whole-grid cosine decoding, 50 timesteps, guidance 3.5
        SamplerConfig cfg;
        cfg.length = 64;
        cfg.steps = 50;
        cfg.unmask_rule = UnmaskRule::SCHEDULE_DERIVED;
        cfg.schedule_kind = ScheduleKind::COSINE;
        cfg.guidance_scale = 3.5;
        cfg.response_modality = Modality::IMAGE;
        const LayoutSequence prompt = random_text(v, 4, rng, Segment::PROMPT);
        run_case(cfg, prompt, false, 434343, "paper image fixture");
    }

    check.note("violations", violations);
    if (!first_violation.empty()) {
        check.note("first", first_violation);
    }
    check.require(violations == 0, "sampler contract violations");
}

// ---- criterion 6 ---------------------------------------------------------

void criterion_unigrpo_mechanics(Checker& check) {
    Rng rng = make_rng(66);

    // advantage identities
    double worst_mean = 0.0, worst_std = 0.0;
    for (int it = 0; it < 2000; ++it) {
        const int g = 2 + static_cast<int>(uniform_below(rng, 7));
        std::vector<double> rewards;
        for (int i = 0; i < g; ++i) {
            rewards.push_back(uniform_real(rng, 0.0, 2.5));
        }
        const auto adv = compute_advantages(rewards);
        double mean = 0.0;
        for (double a : adv) {
            mean += a;
        }
        mean /= g;
        worst_mean = std::max(worst_mean, std::abs(mean));
        double var = 0.0;
        for (double a : adv) {
            var += (a - mean) * (a - mean);
        }
        const double sd = std::sqrt(var / g);
        if (sd > 0.0) {
            worst_std = std::max(worst_std, std::abs(sd - 1.0));
        }
    }
    check.note("adv_mean_err", worst_mean);
    check.note("adv_std_err", worst_std);
    check.require(worst_mean < 1e-9, "advantage mean above 1e-9");
    check.require(worst_std < 1e-6, "advantage std above 1e-6");

    // degenerate guard
    const auto zeros = compute_advantages({1.5, 1.5, 1.5});
    for (double a : zeros) {
        check.require(a == 0.0, "zero-std group must yield zero advantages");
    }

    // noise-plan sweep against exact integer arithmetic
    int plan_violations = 0;
    for (int it = 0; it < 10000; ++it) {
        const int T = 1 + static_cast<int>(uniform_below(rng, 5000));
        const int mu = 1 + static_cast<int>(uniform_below(rng, static_cast<uint64_t>(std::min(T, 10))));
        const int t1 = static_cast<int>(uniform_below(rng, static_cast<uint64_t>(T + 1)));
        const NoisePlan plan = noise_plan_from_start(T, mu, t1);
        bool ok = plan.t_list.size() == static_cast<size_t>(mu) && plan.t_list[0] == t1;
        for (int n = 2; n <= mu; ++n) {
            const long exact =
                static_cast<long>(t1) +
                (static_cast<long>(n - 1) * static_cast<long>(T - t1)) / static_cast<long>(mu - 1);
            ok &= plan.t_list[static_cast<size_t>(n - 1)] == static_cast<int>(exact);
            ok &= plan.t_list[static_cast<size_t>(n - 1)] >= plan.t_list[static_cast<size_t>(n - 2)];
        }
        ok &= plan.t_list.back() <= T && plan.t_list.front() >= 0;
        if (!ok) {
            ++plan_violations;
        }
    }
    // paper worked instance
    const NoisePlan worked = noise_plan_from_start(1000, 5, 100);
    const std::vector<int> want{100, 325, 550, 775, 1000};
    if (!(worked.t_list == want)) {
        ++plan_violations;
    }
    check.note("plan_violations", plan_violations);
    check.require(plan_violations == 0, "noise plan formula sweep");

    // fixed point on a real model: theta = old = ref
    const Vocabulary v = Vocabulary::make_default();
    ModelConfig cfg;
    cfg.layers = 1;
    cfg.model_dim = 16;
    cfg.heads = 2;
    cfg.ffn_dim = 32;
    cfg.max_len = 64;
    cfg.vocab_size = v.total_size();
    cfg.prompt_dropout = 0.0;
    Rng init_rng = make_rng(67);
    const MaskPredictor model(cfg, init_rng);

    Rng data_rng = make_rng(68);
    const LayoutSequence q = random_text(v, 6, data_rng, Segment::PROMPT);
    std::vector<std::vector<double>> lp;
    for (int i = 0; i < 4; ++i) {
        const LayoutSequence o = random_text(v, 10, data_rng, Segment::RESPONSE);
        const TokenLogps t = masked_loglik(model, q, o, 300 + 100 * i, 1000, v, data_rng);
        lp.push_back(t.logp);
    }
    const auto adv = compute_advantages({0.0, 2.0, 0.5, 1.0});
    const ObjectiveTerms terms = unigrpo_objective(lp, lp, lp, adv, 0.2, 0.05);
    check.note("fixed_point_loss", std::abs(terms.loss));
    check.require(std::abs(terms.loss) < 1e-12, "loss not zero at theta=old=ref");
    check.require(terms.clip_fraction == 0.0, "clip fraction not zero at theta=old");
    check.require(terms.mean_kl == 0.0, "KL not zero at theta=ref");
}

// ---- criterion 9 ---------------------------------------------------------

void criterion_estimator_convergence(Checker& check) {
    const Vocabulary v = Vocabulary::make_default();
    ModelConfig cfg;
    cfg.layers = 1;
    cfg.model_dim = 16;
    cfg.heads = 2;
    cfg.ffn_dim = 32;
    cfg.max_len = 64;
    cfg.vocab_size = v.total_size();
    cfg.prompt_dropout = 0.0;
    Rng init_rng = make_rng(90);
    const MaskPredictor model(cfg, init_rng);

    Rng pair_rng = make_rng(93);
    int failures = 0;
    double worst_sigmas = 0.0;
    for (int pair = 0; pair < 20; ++pair) {
        const LayoutSequence q = random_text(v, 4 + uniform_below(pair_rng, 6), pair_rng,
                                             Segment::PROMPT);
        const LayoutSequence o = random_text(v, 8 + uniform_below(pair_rng, 10), pair_rng,
                                             Segment::RESPONSE);

        Rng est_rng = make_rng(95200 + static_cast<uint64_t>(pair));
        const double est128 = baseline_llada_loglik(model, q, o, 128, v, est_rng);

        // 32 independent N=128 blocks form the N=4096 estimate and give the
        // standard error of a single N=128 estimate
        std::vector<double> blocks;
        double total = 0.0;
        Rng big_rng = make_rng(95300 + static_cast<uint64_t>(pair));
        for (int b = 0; b < 32; ++b) {
            blocks.push_back(baseline_llada_loglik(model, q, o, 128, v, big_rng));
            total += blocks.back();
        }
        const double est4096 = total / 32.0;
        double var = 0.0;
        for (double x : blocks) {
            var += (x - est4096) * (x - est4096);
        }
        var /= 31.0;  // sample variance of one N=128 estimate
        const double se_diff = std::sqrt(var * (1.0 + 1.0 / 32.0));
        const double sigmas = std::abs(est128 - est4096) / se_diff;
        worst_sigmas = std::max(worst_sigmas, sigmas);
        if (sigmas > 3.0) {
            ++failures;
        }
    }
    check.note("worst_sigmas", worst_sigmas);
    check.note("pairs_failed", failures);
    check.require(failures == 0, "estimator disagreement beyond 3 standard errors");
}

}  // namespace

std::vector<Criterion> analytic_criteria() {
    return {
        {1, "gradient fidelity vs central finite differences", criterion_gradient_fidelity},
        {2, "discrete-diffusion oracle equivalence", criterion_diffusion_oracles},
        {3, "closed-form uniform-logit loss", criterion_closed_form_loss},
        {5, "sampler contract sweep and paper fixtures", criterion_sampler_contracts},
        {6, "unigrpo mechanics: advantages, noise plan, fixed point", criterion_unigrpo_mechanics},
        {9, "likelihood estimator convergence (N=128 vs N=4096)", criterion_estimator_convergence},
    };
}

}  // namespace acceptance
