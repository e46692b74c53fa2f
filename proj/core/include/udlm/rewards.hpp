#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "udlm/layout.hpp"
#include "udlm/tokenize.hpp"
#include "udlm/vocab.hpp"

namespace udlm {

enum class RewardTaskKind { TEXT_REASONING, MM_REASONING, T2I };

const char* reward_task_name(RewardTaskKind k);

/// Everything a scorer may need; scorers must be pure in (completion, ctx).
struct ScoreContext {
    const Vocabulary* vocab = nullptr;
    std::string gold_answer;
    std::string prompt_text;
    GridShape grid_shape = GridShape::from_tokens(8, 8);
};

using ScorerFn = std::function<double(const LayoutSequence& completion, const ScoreContext&)>;

/// Default component weights. The task-reward constants live only here.
inline constexpr double kCorrectnessWeight = 2.0;
inline constexpr double kFormatWeight = 0.5;
inline constexpr double kAlignmentScale = 0.1;
inline constexpr double kPreferenceScale = 0.1;

struct RewardComponent {
    std::string scorer;
    double weight = 1.0;
};

struct RewardSpec {
    RewardTaskKind kind = RewardTaskKind::TEXT_REASONING;
    std::vector<RewardComponent> components;

    static RewardSpec defaults_for(RewardTaskKind kind);
};

/// In-process named scorer map. Built once at startup; lookups afterwards
/// are read-only, so concurrent scoring of a rollout group is safe.
class ScorerRegistry {
  public:
    void add(const std::string& name, ScorerFn fn);
    bool has(const std::string& name) const;
    const ScorerFn& get(const std::string& name) const;

    /// correctness, format, alignment, preference (synthetic stand-ins for
    /// the neural alignment scorers, behind the same interface).
    static ScorerRegistry with_defaults();

  private:
    std::map<std::string, ScorerFn> scorers_;
};

/// Throws std::invalid_argument at load time when a component names an
/// unregistered scorer; scoring itself never re-validates.
void validate_reward_spec(const RewardSpec& spec, const ScorerRegistry& registry);

/// Weighted sum of the spec's components. Deterministic given inputs.
double composite_reward(const RewardSpec& spec, const ScorerRegistry& registry,
                        const LayoutSequence& completion, const ScoreContext& ctx);

/// 2.0 when the post-reasoning result matches gold after canonicalization
/// (trim, case-fold, leading-zero strip); 0.0 otherwise, including for
/// completions that do not parse.
double correctness_reward(const LayoutSequence& completion, const std::string& gold,
                          const Vocabulary& v);

/// 0.5 iff THINK_OPEN ... THINK_CLOSE appears exactly once, in order,
/// before the result segment.
double format_reward(const LayoutSequence& completion, const Vocabulary& v);

/// 0.1 x raw scorer value. Scorer exceptions are logged and score 0.
using GridScorerFn = std::function<double(const CodeGrid&, const std::string& prompt)>;
double alignment_reward(const CodeGrid& image, const std::string& prompt,
                        const GridScorerFn& scorer);

std::string canonicalize_answer(const std::string& s);

}  // namespace udlm
