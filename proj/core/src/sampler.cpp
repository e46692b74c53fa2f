#include "udlm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace udlm {

namespace {

std::vector<int> support_ids(const Vocabulary& v, Modality mod) {
    std::vector<int> ids;
    if (mod == Modality::IMAGE) {
        ids.reserve(static_cast<size_t>(v.image_ids().size()));
        for (int id = v.image_ids().begin; id < v.image_ids().end; ++id) {
            ids.push_back(id);
        }
        return ids;
    }
    ids.reserve(static_cast<size_t>(v.text_ids().size() + kNumSpecials));
    for (int id = v.text_ids().begin; id < v.text_ids().end; ++id) {
        ids.push_back(id);
    }
    for (int i = 0; i < kNumSpecials; ++i) {
        const auto s = static_cast<Special>(i);
        if (s == Special::MASK || s == Special::NULL_PROMPT) {
            continue;  // never emitted by any sampler
        }
        ids.push_back(v.special_id(s));
    }
    return ids;
}

struct Choice {
    int token = 0;
    double confidence = 0.0;
};

/// Candidate token for one position: argmax of the restricted distribution
/// at temperature 0, a draw from softmax(logits / tau) otherwise. The
/// confidence used for ranking is always the committed token's probability
/// under the untempered restricted softmax.
Choice choose(const Eigen::Ref<const Eigen::RowVectorXd>& row, const std::vector<int>& support,
              double temperature, Rng& rng) {
    double max_logit = row(support[0]);
    size_t best = 0;
    for (size_t i = 1; i < support.size(); ++i) {
        if (row(support[i]) > max_logit) {
            max_logit = row(support[i]);
            best = i;
        }
    }
    double z = 0.0;
    for (int id : support) {
        z += std::exp(row(id) - max_logit);
    }

    size_t chosen = best;
    if (temperature > 0.0) {
        double zt = 0.0;
        for (int id : support) {
            zt += std::exp((row(id) - max_logit) / temperature);
        }
        double u = u01(rng) * zt;
        double acc = 0.0;
        chosen = support.size() - 1;
        for (size_t i = 0; i < support.size(); ++i) {
            acc += std::exp((row(support[i]) - max_logit) / temperature);
            if (u < acc) {
                chosen = i;
                break;
            }
        }
    }
    Choice c;
    c.token = support[chosen];
    c.confidence = std::exp(row(support[chosen]) - max_logit) / z;
    return c;
}

/// Logits for the working sequence, with classifier-free guidance applied
/// to response rows when w > 0. Prompt rows (only relevant to inpainting)
/// always use the conditional pass.
Mat scored_logits(const Predictor& pred, const LayoutSequence& work, size_t prompt_len, double w,
                  const Vocabulary& v) {
    Mat cond = pred.logits(work.tokens);
    if (w == 0.0) {
        return cond;
    }
    std::vector<int> uncond_tokens;
    uncond_tokens.reserve(work.size() - prompt_len + 1);
    uncond_tokens.push_back(v.special_id(Special::NULL_PROMPT));
    uncond_tokens.insert(uncond_tokens.end(), work.tokens.begin() + static_cast<long>(prompt_len),
                         work.tokens.end());
    const Mat uncond = pred.logits(uncond_tokens);
    for (size_t j = prompt_len; j < work.size(); ++j) {
        const auto r = static_cast<Eigen::Index>(j);
        const auto ru = static_cast<Eigen::Index>(j - prompt_len + 1);
        cond.row(r) = (1.0 + w) * cond.row(r) - w * uncond.row(ru);
    }
    return cond;
}

/// Commit counts for one decode region. FIXED_K commits k per step;
/// SCHEDULE_DERIVED keeps ceil(region * m(s)) masked after step s.
std::vector<int> commit_counts(const SamplerConfig& cfg, int region, int steps) {
    std::vector<int> counts(static_cast<size_t>(steps), 0);
    if (cfg.unmask_rule == UnmaskRule::FIXED_K) {
        for (auto& c : counts) {
            c = cfg.unmask_k;
        }
        return counts;
    }
    const Schedule sch{cfg.schedule_kind, steps};
    int remaining = region;
    for (int s = 1; s <= steps; ++s) {
        const int target = static_cast<int>(
            std::ceil(static_cast<double>(region) * masked_fraction(sch, s) - 1e-12));
        counts[static_cast<size_t>(s - 1)] = remaining - target;
        remaining = target;
    }
    return counts;
}

/// Core denoising loop shared by all three samplers: resolves the given
/// regions in order, committing per-step counts by descending confidence.
void denoise_regions(const Predictor& pred, LayoutSequence& work, size_t prompt_len,
                     const std::vector<std::vector<size_t>>& regions,
                     const std::vector<std::vector<int>>& counts, const Vocabulary& v,
                     const SamplerConfig& cfg, Rng& rng) {
    const std::vector<int> text_support = support_ids(v, Modality::TEXT);
    const std::vector<int> image_support = support_ids(v, Modality::IMAGE);
    const int mask = v.mask_id();

    for (size_t ri = 0; ri < regions.size(); ++ri) {
        for (int count : counts[ri]) {
            std::vector<size_t> open;
            for (size_t pos : regions[ri]) {
                if (work.tokens[pos] == mask) {
                    open.push_back(pos);
                }
            }
            if (count <= 0) {
                continue;
            }
            const Mat logits = scored_logits(pred, work, prompt_len, cfg.guidance_scale, v);

            std::vector<std::pair<double, size_t>> ranked;  // (-confidence, index into open)
            std::vector<Choice> choices(open.size());
            for (size_t i = 0; i < open.size(); ++i) {
                const size_t pos = open[i];
                const auto& support =
                    work.modality[pos] == Modality::IMAGE ? image_support : text_support;
                choices[i] =
                    choose(logits.row(static_cast<Eigen::Index>(pos)), support, cfg.temperature, rng);
                ranked.push_back({-choices[i].confidence, i});
            }
            std::sort(ranked.begin(), ranked.end());
            const size_t n_commit = std::min(static_cast<size_t>(count), open.size());
            for (size_t r = 0; r < n_commit; ++r) {
                const size_t i = ranked[r].second;
                work.tokens[open[i]] = choices[i].token;
            }
        }
    }
}

LayoutSequence masked_response(const LayoutSequence& prompt, const Vocabulary& v,
                               const SamplerConfig& cfg) {
    if (!prompt.all_segment(Segment::PROMPT)) {
        throw std::invalid_argument("sampler: prompt must be pure-PROMPT");
    }
    if (prompt.contains(v.mask_id())) {
        throw std::invalid_argument("sampler: prompt contains MASK");
    }
    if (cfg.guidance_scale > 0.0 && prompt.empty()) {
        throw std::invalid_argument("sampler: guidance requires a prompt to drop");
    }
    if (cfg.guidance_scale < 0.0) {
        throw std::invalid_argument("sampler: guidance scale must be >= 0");
    }
    LayoutSequence work = prompt;
    for (int i = 0; i < cfg.length; ++i) {
        work.push_back(v.mask_id(), Segment::RESPONSE, cfg.response_modality);
    }
    return work;
}

}  // namespace

LayoutSequence semi_ar_generate(const Predictor& pred, const LayoutSequence& prompt,
                                const Vocabulary& v, const SamplerConfig& cfg, Rng& rng) {
    const int N = cfg.length;
    const int B = cfg.block_size;
    const int k = cfg.unmask_k;
    if (N <= 0 || B <= 0 || k <= 0) {
        throw std::invalid_argument("semi_ar_generate: length, block_size and unmask_k must be positive");
    }
    if (cfg.unmask_rule != UnmaskRule::FIXED_K) {
        throw std::invalid_argument("semi_ar_generate: block decoding requires FIXED_K");
    }
    if (N % B != 0) {
        throw std::invalid_argument("semi_ar_generate: length must be divisible by block_size");
    }
    if (B % k != 0) {
        throw std::invalid_argument("semi_ar_generate: block_size must be divisible by unmask_k");
    }
    if (cfg.steps * k != N) {
        throw std::invalid_argument("semi_ar_generate: steps must equal length / unmask_k");
    }

    LayoutSequence work = masked_response(prompt, v, cfg);
    const size_t p = prompt.size();

    std::vector<std::vector<size_t>> regions;
    std::vector<std::vector<int>> counts;
    for (int b = 0; b < N / B; ++b) {
        std::vector<size_t> region(static_cast<size_t>(B));
        for (int i = 0; i < B; ++i) {
            region[static_cast<size_t>(i)] = p + static_cast<size_t>(b * B + i);
        }
        regions.push_back(std::move(region));
        counts.push_back(std::vector<int>(static_cast<size_t>(B / k), k));
    }
    denoise_regions(pred, work, p, regions, counts, v, cfg, rng);
    return work;
}

LayoutSequence parallel_generate(const Predictor& pred, const LayoutSequence& prompt,
                                 const Vocabulary& v, const SamplerConfig& cfg, Rng& rng) {
    const int N = cfg.length;
    const int S = cfg.steps;
    if (N <= 0 || S <= 0) {
        throw std::invalid_argument("parallel_generate: length and steps must be positive");
    }
    if (cfg.unmask_rule == UnmaskRule::FIXED_K && S * cfg.unmask_k != N) {
        throw std::invalid_argument("parallel_generate: FIXED_K requires steps * unmask_k == length");
    }

    LayoutSequence work = masked_response(prompt, v, cfg);
    const size_t p = prompt.size();

    std::vector<size_t> region(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) {
        region[static_cast<size_t>(i)] = p + static_cast<size_t>(i);
    }
    denoise_regions(pred, work, p, {region}, {commit_counts(cfg, N, S)}, v, cfg, rng);
    return work;
}

LayoutSequence inpaint(const Predictor& pred, const LayoutSequence& partial, const Vocabulary& v,
                       const SamplerConfig& cfg, Rng& rng) {
    std::vector<size_t> holes;
    for (size_t i = 0; i < partial.size(); ++i) {
        if (partial.tokens[i] == v.mask_id()) {
            holes.push_back(i);
        }
    }
    if (holes.empty()) {
        std::cerr << "inpaint: input contains no MASK tokens; returning it unchanged\n";
        return partial;
    }
    const int M = static_cast<int>(holes.size());
    const int S = cfg.steps;
    if (S <= 0) {
        throw std::invalid_argument("inpaint: steps must be positive");
    }
    if (cfg.unmask_rule == UnmaskRule::FIXED_K && S * cfg.unmask_k != M) {
        throw std::invalid_argument("inpaint: FIXED_K requires steps * unmask_k == masked count");
    }
    if (cfg.guidance_scale > 0.0 && partial.prompt_length() == 0) {
        throw std::invalid_argument("inpaint: guidance requires a prompt segment");
    }
    if (cfg.guidance_scale < 0.0) {
        throw std::invalid_argument("inpaint: guidance scale must be >= 0");
    }

    LayoutSequence work = partial;
    denoise_regions(pred, work, partial.prompt_length(), {holes}, {commit_counts(cfg, M, S)}, v,
                    cfg, rng);
    return work;
}

}  // namespace udlm
