#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "udlm/model.hpp"
#include "udlm/rng.hpp"
#include "udlm/tokenize.hpp"
#include "udlm/vocab.hpp"

namespace udlm::testing {

/// Tiny vocabulary for gradient checks (keeps model parameter counts small).
inline Vocabulary tiny_vocab(int image_codes = 4) {
    return Vocabulary("ab01+=", image_codes);
}

/// Relative L2 error between an analytic gradient and central finite
/// differences of `loss_fn` over every parameter.
inline double fd_relative_error(MaskPredictor& model,
                                const std::function<double(const MaskPredictor&)>& loss_fn,
                                const Params& analytic, double h = 1e-4) {
    const std::vector<double> base = model.flatten_params();
    const std::vector<double> ga = MaskPredictor::flatten(model.config(), analytic);

    std::vector<double> gf(base.size());
    std::vector<double> bumped = base;
    for (size_t i = 0; i < base.size(); ++i) {
        bumped[i] = base[i] + h;
        model.unflatten_params(bumped);
        const double up = loss_fn(model);
        bumped[i] = base[i] - h;
        model.unflatten_params(bumped);
        const double down = loss_fn(model);
        bumped[i] = base[i];
        gf[i] = (up - down) / (2.0 * h);
    }
    model.unflatten_params(base);

    double diff2 = 0.0, na = 0.0, nf = 0.0;
    for (size_t i = 0; i < gf.size(); ++i) {
        diff2 += (ga[i] - gf[i]) * (ga[i] - gf[i]);
        na += ga[i] * ga[i];
        nf += gf[i] * gf[i];
    }
    const double denom = std::max(std::sqrt(na), std::sqrt(nf));
    return denom == 0.0 ? std::sqrt(diff2) : std::sqrt(diff2) / denom;
}

/// Deterministic pseudo-random logits keyed by (seed, position, token);
/// cheap stand-in model for sampler contract sweeps.
struct HashPredictor : Predictor {
    int vocab_size;
    uint64_t seed;

    HashPredictor(int vocab, uint64_t s) : vocab_size(vocab), seed(s) {}

    Mat logits(const std::vector<int>& tokens) const override {
        Mat out(static_cast<Eigen::Index>(tokens.size()), vocab_size);
        for (size_t i = 0; i < tokens.size(); ++i) {
            for (int t = 0; t < vocab_size; ++t) {
                const uint64_t h = mix64(seed ^ (static_cast<uint64_t>(i) << 32) ^
                                         static_cast<uint64_t>(t) ^
                                         (static_cast<uint64_t>(tokens[i]) << 16));
                out(static_cast<Eigen::Index>(i), t) =
                    6.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 3.0;
            }
        }
        return out;
    }
};

/// All-zero logits: the exactly-uniform model.
struct UniformPredictor : Predictor {
    int vocab_size;
    explicit UniformPredictor(int vocab) : vocab_size(vocab) {}
    Mat logits(const std::vector<int>& tokens) const override {
        return Mat::Zero(static_cast<Eigen::Index>(tokens.size()), vocab_size);
    }
};

/// Two-sample Kolmogorov-Smirnov test, asymptotic p-value.
inline double ks_p_value(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const size_t n1 = a.size(), n2 = b.size();
    size_t i = 0, j = 0;
    double d = 0.0;
    while (i < n1 && j < n2) {
        const double x = std::min(a[i], b[j]);
        while (i < n1 && a[i] <= x) ++i;
        while (j < n2 && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / n1 - static_cast<double>(j) / n2));
    }
    const double ne = static_cast<double>(n1) * static_cast<double>(n2) /
                      static_cast<double>(n1 + n2);
    const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k) {
        p += 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    }
    return std::clamp(p, 0.0, 1.0);
}

inline double median(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

inline LayoutSequence random_text(const Vocabulary& v, size_t len, Rng& rng,
                                  Segment seg = Segment::RESPONSE) {
    LayoutSequence out;
    for (size_t i = 0; i < len; ++i) {
        out.push_back(v.text_ids().begin +
                          static_cast<int>(uniform_below(rng, static_cast<uint64_t>(v.text_ids().size()))),
                      seg, Modality::TEXT);
    }
    return out;
}

}  // namespace udlm::testing
