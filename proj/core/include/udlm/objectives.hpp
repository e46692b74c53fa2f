#pragma once

#include <optional>
#include <vector>

#include "udlm/diffusion.hpp"
#include "udlm/model.hpp"

namespace udlm {

struct LossReport {
    double value = 0.0;
    int masked_count = 0;
    double t_used = 0.0;
    std::optional<std::vector<double>> per_position;
};

/// Mask-ratio draw for training corruption: uniform on [1e-3, 1]. The lower
/// bound keeps the 1/t loss weight finite.
double sample_mask_ratio(Rng& rng);

/// Core masked cross-entropy: -(1/t) * sum over masked positions of
/// log p_theta(clean_i | noisy), scaled by `scale` (batch weighting).
/// Gradients flow into `grads` when given; only masked positions produce
/// logit gradients.
LossReport masked_ce_loss(const MaskPredictor& model, const MaskedSample& sample,
                          Params* grads = nullptr, double scale = 1.0,
                          bool keep_per_position = false);

/// Unified objective over the full sequence: samples t, corrupts every
/// position, weights the masked log-likelihood sum by 1/t. Rejects empty
/// sequences and sequences already containing MASK.
LossReport unified_loss(const MaskPredictor& model, const LayoutSequence& x0, const Vocabulary& v,
                        Rng& rng, Params* grads = nullptr);

/// Same estimator with corruption restricted to a scope; unified_loss is
/// the MaskScope::ALL case and the mixed SFT objective is the
/// MaskScope::RESPONSE_ONLY case on a [prompt, response] concatenation.
LossReport scoped_loss(const MaskPredictor& model, const LayoutSequence& x0, MaskScope scope,
                       const Vocabulary& v, Rng& rng, Params* grads = nullptr);

/// Mixed CoT finetuning objective: the prompt is kept clean (and, with
/// probability prompt_dropout, replaced by a single NULL_PROMPT token so an
/// unconditional branch is trained for guidance); only response positions
/// are corrupted and only they contribute loss.
LossReport mixed_sft_loss(const MaskPredictor& model, const LayoutSequence& p0,
                          const LayoutSequence& r0, const Vocabulary& v, Rng& rng,
                          Params* grads = nullptr);

struct BatchItem {
    const LayoutSequence* prompt = nullptr;   // null for unified items
    const LayoutSequence* sequence = nullptr; // x0 for unified, response for SFT
};

enum class LossKind { UNIFIED, MIXED_SFT };

/// Mean over batch items; each item draws its own t. Gradients are
/// accumulated with weight 1/batch.
LossReport batch_loss(const MaskPredictor& model, const std::vector<BatchItem>& batch,
                      LossKind kind, const Vocabulary& v, Rng& rng, Params* grads = nullptr);

}  // namespace udlm
