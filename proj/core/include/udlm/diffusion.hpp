#pragma once

#include <Eigen/Dense>
#include <vector>

#include "udlm/layout.hpp"
#include "udlm/rng.hpp"
#include "udlm/vocab.hpp"

namespace udlm {

enum class MaskScope { ALL, RESPONSE_ONLY };

/// A corrupted sequence together with its clean original. noisy[i] == MASK
/// exactly for i in mask_positions; every other position equals clean[i].
struct MaskedSample {
    LayoutSequence clean;
    LayoutSequence noisy;
    double t = 0.0;
    std::vector<size_t> mask_positions;
};

/// Each in-scope position is independently replaced by MASK with
/// probability t. Draws that mask nothing are redone so the sample always
/// carries at least one masked position (the 1/t-weighted loss is undefined
/// otherwise). Requires 0 < t <= 1.
MaskedSample forward_mask(const LayoutSequence& x0, double t, MaskScope scope,
                          const Vocabulary& v, Rng& rng);

/// Mask exactly `count` uniformly chosen in-scope positions.
MaskedSample forward_mask_exact(const LayoutSequence& x0, size_t count, MaskScope scope,
                                const Vocabulary& v, Rng& rng);

/// Per-step parameters of the general mask-and-replace transition kernel
/// over K ordinary categories plus an absorbing MASK state. Each step must
/// satisfy alpha + K*beta + gamma = 1 with non-negative entries.
struct TransitionSpec {
    int K = 0;
    std::vector<double> alpha;
    std::vector<double> beta;
    std::vector<double> gamma;

    int steps() const { return static_cast<int>(alpha.size()); }
    void validate() const;
};

/// (K+1)x(K+1) column-stochastic matrix Q_step, column = source state,
/// row = destination state; index K is MASK. An ordinary column has
/// alpha+beta on the diagonal, beta on the other ordinary rows and gamma on
/// the MASK row; the MASK column is the unit vector on MASK. `step` is
/// 1-based.
Eigen::MatrixXd build_transition_matrix(const TransitionSpec& spec, int step);

/// Marginal kernel Q̄ = Q_up_to * ... * Q_1; q(x_t | x_0) is column x_0.
Eigen::MatrixXd marginal_transition(const TransitionSpec& spec, int up_to);

/// Posterior q(x_{t-1} | x_t, x_0) as a distribution over the K+1 states.
/// Throws std::domain_error("unreachable corruption state") when
/// q(x_t | x_0) = 0.
Eigen::VectorXd posterior(int x_t, int x_0, const TransitionSpec& spec, int step);

enum class ScheduleKind { LINEAR, COSINE };

struct Schedule {
    ScheduleKind kind = ScheduleKind::LINEAR;
    int steps = 1;
};

/// Fraction of positions still masked after denoising step s:
/// LINEAR 1 - s/T, COSINE cos((pi/2) * s/T); clamped to [0,1], so m(0)=1
/// and m(T)=0 for both kinds.
double masked_fraction(const Schedule& sch, int s);

}  // namespace udlm
