#include "udlm/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace udlm {

double sample_mask_ratio(Rng& rng) {
    return uniform_real(rng, 1e-3, 1.0);
}

LossReport masked_ce_loss(const MaskPredictor& model, const MaskedSample& sample, Params* grads,
                          double scale, bool keep_per_position) {
    if (sample.mask_positions.empty()) {
        throw std::invalid_argument("masked_ce_loss: sample has no masked positions");
    }
    const double weight = 1.0 / sample.t;

    ForwardCache cache;
    const Mat logits = model.forward(sample.noisy.tokens, grads ? &cache : nullptr);

    LossReport report;
    report.t_used = sample.t;
    report.masked_count = static_cast<int>(sample.mask_positions.size());
    if (keep_per_position) {
        report.per_position.emplace();
        report.per_position->reserve(sample.mask_positions.size());
    }

    Mat dlogits;
    if (grads) {
        dlogits = Mat::Zero(logits.rows(), logits.cols());
    }

    double total = 0.0;
    for (size_t pos : sample.mask_positions) {
        const auto r = static_cast<Eigen::Index>(pos);
        const int target = sample.clean.tokens[pos];
        const double logp = log_softmax_at(logits.row(r), target);
        total -= weight * logp;
        if (keep_per_position) {
            report.per_position->push_back(-weight * logp);
        }
        if (grads) {
            // d(-w*logp)/dlogits = w * (softmax - onehot)
            const double m = logits.row(r).maxCoeff();
            Eigen::RowVectorXd p = (logits.row(r).array() - m).exp().matrix();
            p /= p.sum();
            dlogits.row(r) = (scale * weight) * p;
            dlogits(r, target) -= scale * weight;
        }
    }
    report.value = total;
    if (!std::isfinite(report.value)) {
        throw std::runtime_error("masked_ce_loss: non-finite loss");
    }
    if (grads) {
        model.backward(cache, dlogits, *grads);
    }
    return report;
}

LossReport scoped_loss(const MaskPredictor& model, const LayoutSequence& x0, MaskScope scope,
                       const Vocabulary& v, Rng& rng, Params* grads) {
    if (x0.empty()) {
        throw std::invalid_argument("loss: empty sequence");
    }
    const double t = sample_mask_ratio(rng);
    const MaskedSample sample = forward_mask(x0, t, scope, v, rng);
    return masked_ce_loss(model, sample, grads);
}

LossReport unified_loss(const MaskPredictor& model, const LayoutSequence& x0, const Vocabulary& v,
                        Rng& rng, Params* grads) {
    return scoped_loss(model, x0, MaskScope::ALL, v, rng, grads);
}

LossReport mixed_sft_loss(const MaskPredictor& model, const LayoutSequence& p0,
                          const LayoutSequence& r0, const Vocabulary& v, Rng& rng, Params* grads) {
    if (r0.empty()) {
        throw std::invalid_argument("mixed_sft_loss: empty response");
    }
    if (!p0.all_segment(Segment::PROMPT) || !r0.all_segment(Segment::RESPONSE)) {
        throw std::invalid_argument("mixed_sft_loss: p0 must be pure-PROMPT and r0 pure-RESPONSE");
    }

    LayoutSequence x0;
    const double dropout = model.config().prompt_dropout;
    if (dropout > 0.0 && u01(rng) < dropout) {
        x0.push_back(v.special_id(Special::NULL_PROMPT), Segment::PROMPT, Modality::TEXT);
    } else {
        x0 = p0;
    }
    x0.append(r0);
    return scoped_loss(model, x0, MaskScope::RESPONSE_ONLY, v, rng, grads);
}

LossReport batch_loss(const MaskPredictor& model, const std::vector<BatchItem>& batch,
                      LossKind kind, const Vocabulary& v, Rng& rng, Params* grads) {
    if (batch.empty()) {
        throw std::invalid_argument("batch_loss: empty batch");
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    LossReport total;
    Params item_grads;
    if (grads) {
        item_grads = model.zero_like();
    }
    for (const BatchItem& item : batch) {
        LossReport r;
        if (kind == LossKind::UNIFIED) {
            r = unified_loss(model, *item.sequence, v, rng, grads ? &item_grads : nullptr);
        } else {
            r = mixed_sft_loss(model, *item.prompt, *item.sequence, v, rng,
                               grads ? &item_grads : nullptr);
        }
        total.value += inv_b * r.value;
        total.masked_count += r.masked_count;
        total.t_used = r.t_used;
    }
    if (grads) {
        accumulate(*grads, item_grads, inv_b);
    }
    return total;
}

}  // namespace udlm
