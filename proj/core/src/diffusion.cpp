#include "udlm/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace udlm {

namespace {

std::vector<size_t> scope_positions(const LayoutSequence& x0, MaskScope scope) {
    std::vector<size_t> in_scope;
    in_scope.reserve(x0.size());
    for (size_t i = 0; i < x0.size(); ++i) {
        if (scope == MaskScope::ALL || x0.segment[i] == Segment::RESPONSE) {
            in_scope.push_back(i);
        }
    }
    return in_scope;
}

MaskedSample apply_mask(const LayoutSequence& x0, double t, std::vector<size_t> positions,
                        const Vocabulary& v) {
    MaskedSample s;
    s.clean = x0;
    s.noisy = x0;
    s.t = t;
    s.mask_positions = std::move(positions);
    const int mask = v.mask_id();
    for (size_t i : s.mask_positions) {
        s.noisy.tokens[i] = mask;
    }
    return s;
}

}  // namespace

MaskedSample forward_mask(const LayoutSequence& x0, double t, MaskScope scope,
                          const Vocabulary& v, Rng& rng) {
    if (!(t > 0.0 && t <= 1.0)) {
        throw std::invalid_argument("forward_mask: t must lie in (0, 1]");
    }
    if (x0.contains(v.mask_id())) {
        throw std::invalid_argument("forward_mask: input already contains MASK");
    }
    const std::vector<size_t> in_scope = scope_positions(x0, scope);
    if (in_scope.empty()) {
        throw std::invalid_argument("forward_mask: no in-scope positions");
    }

    // Resample empty draws; bail out to a single uniform pick if t is so
    // small the loop would effectively never terminate.
    constexpr int kMaxDraws = 64;
    std::vector<size_t> masked;
    for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
        masked.clear();
        for (size_t i : in_scope) {
            if (u01(rng) < t) {
                masked.push_back(i);
            }
        }
        if (!masked.empty()) {
            return apply_mask(x0, t, std::move(masked), v);
        }
    }
    masked.assign(1, in_scope[uniform_below(rng, in_scope.size())]);
    return apply_mask(x0, t, std::move(masked), v);
}

MaskedSample forward_mask_exact(const LayoutSequence& x0, size_t count, MaskScope scope,
                                const Vocabulary& v, Rng& rng) {
    std::vector<size_t> in_scope = scope_positions(x0, scope);
    if (count == 0 || count > in_scope.size()) {
        throw std::invalid_argument("forward_mask_exact: count out of range");
    }
    // Partial Fisher-Yates over the in-scope index list.
    for (size_t i = 0; i < count; ++i) {
        size_t j = i + uniform_below(rng, in_scope.size() - i);
        std::swap(in_scope[i], in_scope[j]);
    }
    in_scope.resize(count);
    std::sort(in_scope.begin(), in_scope.end());
    return apply_mask(x0, static_cast<double>(count) / static_cast<double>(x0.size()),
                      std::move(in_scope), v);
}

void TransitionSpec::validate() const {
    if (K <= 0) {
        throw std::invalid_argument("transition spec: K must be positive");
    }
    if (alpha.empty() || beta.size() != alpha.size() || gamma.size() != alpha.size()) {
        throw std::invalid_argument("transition spec: alpha/beta/gamma must be equal non-empty lengths");
    }
    for (size_t s = 0; s < alpha.size(); ++s) {
        if (alpha[s] < 0.0 || beta[s] < 0.0 || gamma[s] < 0.0) {
            throw std::invalid_argument("transition spec: negative entry at step " + std::to_string(s + 1));
        }
        double total = alpha[s] + K * beta[s] + gamma[s];
        if (std::abs(total - 1.0) > 1e-12) {
            throw std::invalid_argument("transition spec: alpha + K*beta + gamma != 1 at step " +
                                        std::to_string(s + 1));
        }
    }
}

Eigen::MatrixXd build_transition_matrix(const TransitionSpec& spec, int step) {
    spec.validate();
    if (step < 1 || step > spec.steps()) {
        throw std::invalid_argument("build_transition_matrix: step out of range");
    }
    const int K = spec.K;
    const double a = spec.alpha[static_cast<size_t>(step - 1)];
    const double b = spec.beta[static_cast<size_t>(step - 1)];
    const double g = spec.gamma[static_cast<size_t>(step - 1)];

    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(K + 1, K + 1);
    for (int col = 0; col < K; ++col) {
        for (int row = 0; row < K; ++row) {
            Q(row, col) = (row == col) ? a + b : b;
        }
        Q(K, col) = g;
    }
    Q(K, K) = 1.0;  // MASK is absorbing
    return Q;
}

Eigen::MatrixXd marginal_transition(const TransitionSpec& spec, int up_to) {
    spec.validate();
    if (up_to < 1 || up_to > spec.steps()) {
        throw std::invalid_argument("marginal_transition: step out of range");
    }
    Eigen::MatrixXd acc = build_transition_matrix(spec, 1);
    for (int s = 2; s <= up_to; ++s) {
        acc = build_transition_matrix(spec, s) * acc;
    }
    return acc;
}

Eigen::VectorXd posterior(int x_t, int x_0, const TransitionSpec& spec, int step) {
    spec.validate();
    if (step < 1 || step > spec.steps()) {
        throw std::invalid_argument("posterior: step out of range");
    }
    const int n = spec.K + 1;
    if (x_t < 0 || x_t >= n || x_0 < 0 || x_0 >= n) {
        throw std::invalid_argument("posterior: state out of range");
    }

    const Eigen::MatrixXd Qt = build_transition_matrix(spec, step);
    const Eigen::MatrixXd prev = step == 1 ? Eigen::MatrixXd::Identity(n, n).eval()
                                           : marginal_transition(spec, step - 1);
    const Eigen::MatrixXd cur = Qt * prev;

    const double denom = cur(x_t, x_0);
    if (denom <= 0.0) {
        throw std::domain_error("unreachable corruption state");
    }
    Eigen::VectorXd post(n);
    for (int z = 0; z < n; ++z) {
        post(z) = Qt(x_t, z) * prev(z, x_0) / denom;
    }
    return post;
}

double masked_fraction(const Schedule& sch, int s) {
    if (s < 0 || s > sch.steps) {
        throw std::invalid_argument("masked_fraction: step out of range");
    }
    const double u = static_cast<double>(s) / static_cast<double>(sch.steps);
    double m = 0.0;
    switch (sch.kind) {
        case ScheduleKind::LINEAR: m = 1.0 - u; break;
        case ScheduleKind::COSINE: m = std::cos(1.5707963267948966 * u); break;
    }
    return std::clamp(m, 0.0, 1.0);
}

}  // namespace udlm
