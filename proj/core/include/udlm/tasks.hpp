#pragma once

#include <optional>
#include <string>
#include <vector>

#include "udlm/layout.hpp"
#include "udlm/rewards.hpp"
#include "udlm/rng.hpp"
#include "udlm/tokenize.hpp"
#include "udlm/vocab.hpp"

namespace udlm {

/// One synthetic training/evaluation item. `sft_response` is the CoT-format
/// target (DELIM THINK_OPEN trace THINK_CLOSE DELIM result, EOS-padded).
struct TaskInstance {
    LayoutSequence prompt;
    std::string prompt_text;
    std::string gold_answer;
    CodeGrid gold_grid;
    RewardTaskKind kind = RewardTaskKind::TEXT_REASONING;
    LayoutSequence sft_response;
};

/// "compute (a-b)*(c+d)/e" with guaranteed-integer division and a templated
/// step-by-step trace. `difficulty` bounds the intermediate magnitudes.
TaskInstance gen_arithmetic_task(Rng& rng, int difficulty, const Vocabulary& v, int pad_to = 0);

/// Checks that a trace of "lhs=value" steps is arithmetically valid and
/// ends at `gold`. Generators are self-verifying through this.
bool verify_arithmetic_trace(const std::string& trace, const std::string& gold);

/// Operand bound used by gen_arithmetic_task at a difficulty level.
int arithmetic_operand_bound(int difficulty);

// ---- toy text-to-image grammar ------------------------------------------

struct T2IPrompt {
    int count = 0;
    std::string color;
    std::string shape;
};

std::optional<T2IPrompt> parse_t2i_prompt(const std::string& prompt);

/// Codebook partition for the 64-code default vocabulary; code 0 is the
/// background.
struct ColorBand {
    std::string name;
    int begin = 0;
    int end = 0;
};
const std::vector<ColorBand>& color_bands();
const std::vector<std::string>& shape_names();

inline constexpr int kGridSide = 8;
inline constexpr int kT2ICodebook = 64;

/// "count=n color=c shape=s" with a rendered gold grid of n non-touching
/// motifs whose codes lie in the named band.
TaskInstance gen_t2i_task(Rng& rng, const Vocabulary& v, int pad_to = 0);

CodeGrid render_motif_grid(const T2IPrompt& p, Rng& rng);

/// Fraction of satisfied prompt constraints (count, color, shape; partial
/// credit each) scaled to [0, 10]. Alignment-scorer stand-in.
double constraint_match_score(const CodeGrid& grid, const std::string& prompt);

/// Fraction of non-background cells that form well-shaped motifs of any
/// known shape, scaled to [0, 10]. Preference-scorer stand-in
/// (prompt-independent).
double motif_quality_score(const CodeGrid& grid, const std::string& prompt);

/// Append EOS until the response reaches pad_to tokens (no-op for 0).
LayoutSequence pad_response(LayoutSequence r, int pad_to, const Vocabulary& v);

}  // namespace udlm
