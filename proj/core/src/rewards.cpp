#include "udlm/rewards.hpp"

#include <cctype>
#include <iostream>
#include <stdexcept>

#include "udlm/tasks.hpp"

namespace udlm {

namespace {

/// Result segment of a CoT completion decoded as text, or nullopt.
std::optional<std::string> parsed_result_text(const LayoutSequence& completion,
                                              const Vocabulary& v) {
    const auto parts = parse_cot(completion, v);
    if (!parts) {
        return std::nullopt;
    }
    std::string out;
    for (int id : parts->result.tokens) {
        if (!v.is_text(id)) {
            return std::nullopt;
        }
        out.push_back(v.id_char(id));
    }
    return out;
}

std::optional<CodeGrid> parsed_result_grid(const LayoutSequence& completion, const Vocabulary& v,
                                           const GridShape& shape) {
    const auto parts = parse_cot(completion, v);
    if (!parts || static_cast<int>(parts->result.size()) != shape.token_count()) {
        return std::nullopt;
    }
    for (int id : parts->result.tokens) {
        if (!v.is_image(id)) {
            return std::nullopt;
        }
    }
    return tokens_to_grid(parts->result, shape, v);
}

}  // namespace

const char* reward_task_name(RewardTaskKind k) {
    switch (k) {
        case RewardTaskKind::TEXT_REASONING: return "text_reasoning";
        case RewardTaskKind::MM_REASONING: return "mm_reasoning";
        case RewardTaskKind::T2I: return "t2i";
    }
    return "?";
}

std::string canonicalize_answer(const std::string& s) {
    size_t begin = 0, end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    std::string out = s.substr(begin, end - begin);
    for (char& c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    // strip leading zeros of a (possibly signed) integer, keeping "0"
    size_t digits_begin = out.empty() ? 0 : (out[0] == '-' || out[0] == '+' ? 1 : 0);
    size_t i = digits_begin;
    while (i + 1 < out.size() && out[i] == '0' &&
           std::isdigit(static_cast<unsigned char>(out[i + 1]))) {
        ++i;
    }
    if (i > digits_begin) {
        out.erase(digits_begin, i - digits_begin);
    }
    return out;
}

double correctness_reward(const LayoutSequence& completion, const std::string& gold,
                          const Vocabulary& v) {
    const auto text = parsed_result_text(completion, v);
    if (!text) {
        return 0.0;
    }
    return canonicalize_answer(*text) == canonicalize_answer(gold) ? kCorrectnessWeight : 0.0;
}

double format_reward(const LayoutSequence& completion, const Vocabulary& v) {
    const auto parts = parse_cot(completion, v);
    if (!parts) {
        return 0.0;
    }
    // Result starts right after the second DELIM; the pattern must be the
    // unique THINK_OPEN ... THINK_CLOSE pair, in order, before it.
    const int open = v.special_id(Special::THINK_OPEN);
    const int close = v.special_id(Special::THINK_CLOSE);
    int opens = 0, closes = 0;
    long open_pos = -1, close_pos = -1;
    for (size_t i = 0; i < completion.size(); ++i) {
        if (completion.tokens[i] == open) {
            ++opens;
            open_pos = static_cast<long>(i);
        } else if (completion.tokens[i] == close) {
            ++closes;
            close_pos = static_cast<long>(i);
        }
    }
    if (opens != 1 || closes != 1 || open_pos > close_pos) {
        return 0.0;
    }
    // locate the second DELIM (start of result) in the completion
    const int delim = v.special_id(Special::DELIM);
    long second_delim = -1;
    int seen = 0;
    for (size_t i = 0; i < completion.size(); ++i) {
        if (completion.tokens[i] == delim && ++seen == 2) {
            second_delim = static_cast<long>(i);
            break;
        }
    }
    if (second_delim < 0 || close_pos > second_delim) {
        return 0.0;
    }
    return kFormatWeight;
}

double alignment_reward(const CodeGrid& image, const std::string& prompt,
                        const GridScorerFn& scorer) {
    try {
        return kAlignmentScale * scorer(image, prompt);
    } catch (const std::exception& e) {
        std::cerr << "alignment_reward: scorer failed (" << e.what() << "); scoring 0\n";
        return 0.0;
    }
}

RewardSpec RewardSpec::defaults_for(RewardTaskKind kind) {
    RewardSpec spec;
    spec.kind = kind;
    switch (kind) {
        case RewardTaskKind::TEXT_REASONING:
            spec.components = {{"correctness", kCorrectnessWeight}, {"format", kFormatWeight}};
            break;
        case RewardTaskKind::MM_REASONING:
            spec.components = {{"correctness", kCorrectnessWeight},
                               {"format", kFormatWeight},
                               {"alignment", kAlignmentScale}};
            break;
        case RewardTaskKind::T2I:
            spec.components = {{"alignment", kAlignmentScale}, {"preference", kPreferenceScale}};
            break;
    }
    return spec;
}

void ScorerRegistry::add(const std::string& name, ScorerFn fn) {
    scorers_[name] = std::move(fn);
}

bool ScorerRegistry::has(const std::string& name) const {
    return scorers_.count(name) > 0;
}

const ScorerFn& ScorerRegistry::get(const std::string& name) const {
    auto it = scorers_.find(name);
    if (it == scorers_.end()) {
        throw std::invalid_argument("scorer registry: unknown scorer '" + name + "'");
    }
    return it->second;
}

ScorerRegistry ScorerRegistry::with_defaults() {
    ScorerRegistry reg;
    // Unit-scale scorers; the RewardSpec table carries the weights.
    reg.add("correctness", [](const LayoutSequence& completion, const ScoreContext& ctx) {
        const auto text = parsed_result_text(completion, *ctx.vocab);
        if (!text) {
            return 0.0;
        }
        return canonicalize_answer(*text) == canonicalize_answer(ctx.gold_answer) ? 1.0 : 0.0;
    });
    reg.add("format", [](const LayoutSequence& completion, const ScoreContext& ctx) {
        return format_reward(completion, *ctx.vocab) > 0.0 ? 1.0 : 0.0;
    });
    reg.add("alignment", [](const LayoutSequence& completion, const ScoreContext& ctx) {
        const auto grid = parsed_result_grid(completion, *ctx.vocab, ctx.grid_shape);
        if (!grid) {
            return 0.0;
        }
        try {
            return constraint_match_score(*grid, ctx.prompt_text);
        } catch (const std::exception& e) {
            std::cerr << "alignment scorer failed (" << e.what() << "); scoring 0\n";
            return 0.0;
        }
    });
    reg.add("preference", [](const LayoutSequence& completion, const ScoreContext& ctx) {
        const auto grid = parsed_result_grid(completion, *ctx.vocab, ctx.grid_shape);
        if (!grid) {
            return 0.0;
        }
        try {
            return motif_quality_score(*grid, ctx.prompt_text);
        } catch (const std::exception& e) {
            std::cerr << "preference scorer failed (" << e.what() << "); scoring 0\n";
            return 0.0;
        }
    });
    return reg;
}

void validate_reward_spec(const RewardSpec& spec, const ScorerRegistry& registry) {
    for (const auto& comp : spec.components) {
        if (!registry.has(comp.scorer)) {
            throw std::invalid_argument("reward spec: unknown scorer '" + comp.scorer + "'");
        }
    }
}

double composite_reward(const RewardSpec& spec, const ScorerRegistry& registry,
                        const LayoutSequence& completion, const ScoreContext& ctx) {
    double total = 0.0;
    for (const auto& comp : spec.components) {
        total += comp.weight * registry.get(comp.scorer)(completion, ctx);
    }
    return total;
}

}  // namespace udlm
