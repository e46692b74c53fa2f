#pragma once

#include "udlm/diffusion.hpp"
#include "udlm/layout.hpp"
#include "udlm/model.hpp"
#include "udlm/rng.hpp"

namespace udlm {

enum class UnmaskRule { FIXED_K, SCHEDULE_DERIVED };

struct SamplerConfig {
    int length = 64;            // response tokens to generate (N)
    int steps = 32;             // denoising steps (S)
    int block_size = 64;        // semi-AR block width (B)
    ScheduleKind schedule_kind = ScheduleKind::LINEAR;
    UnmaskRule unmask_rule = UnmaskRule::FIXED_K;
    int unmask_k = 2;           // tokens committed per step under FIXED_K
    double guidance_scale = 0.0;
    double temperature = 0.0;
    Modality response_modality = Modality::TEXT;
};

/// Block-wise left-to-right decoding with diffusion denoising inside each
/// block: every step scores all masked positions of the active block and
/// commits the k most confident (confidence = softmax probability of the
/// committed token). Commitments are permanent; the prompt is preserved
/// bit-exactly. Requires length % block_size == 0, block_size % k == 0 and
/// steps == length / k so decoding terminates exactly at `steps`.
LayoutSequence semi_ar_generate(const Predictor& pred, const LayoutSequence& prompt,
                                const Vocabulary& v, const SamplerConfig& cfg, Rng& rng);

/// Whole-sequence parallel decoding. Under SCHEDULE_DERIVED the number of
/// tokens still masked after step s is ceil(N * masked_fraction(s)) and the
/// lowest-confidence predictions stay masked; under FIXED_K exactly k
/// commit per step (requires N == steps * k). With guidance w > 0 logits
/// become (1+w)*cond - w*uncond, where the unconditional pass replaces the
/// prompt with a single NULL_PROMPT token.
LayoutSequence parallel_generate(const Predictor& pred, const LayoutSequence& prompt,
                                 const Vocabulary& v, const SamplerConfig& cfg, Rng& rng);

/// Fills only the MASK positions of a partially specified sequence (any
/// modality mix, any segment); every given token is preserved bit-exactly.
/// A mask-free input is returned unchanged with a warning on stderr.
LayoutSequence inpaint(const Predictor& pred, const LayoutSequence& partial, const Vocabulary& v,
                       const SamplerConfig& cfg, Rng& rng);

}  // namespace udlm
