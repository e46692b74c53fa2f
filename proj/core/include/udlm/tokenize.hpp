#pragma once

#include <string>
#include <utility>
#include <vector>

#include "udlm/layout.hpp"
#include "udlm/vocab.hpp"

namespace udlm {

/// Row-major grid of image codebook indices.
using CodeGrid = std::vector<std::vector<int>>;

/// Character-level text encoding; all positions TEXT/RESPONSE tagged.
/// Throws std::invalid_argument naming the offending position on an
/// out-of-charset character. decode_text is its exact inverse.
LayoutSequence encode_text(const std::string& s, const Vocabulary& v,
                           Segment seg = Segment::RESPONSE);
std::string decode_text(const LayoutSequence& seq, const Vocabulary& v);

/// Raster-order (row-major) flattening of a codebook-index grid; all
/// positions IMAGE tagged. Cell indices must be < codebook size.
LayoutSequence grid_to_tokens(const CodeGrid& grid, const Vocabulary& v,
                              Segment seg = Segment::RESPONSE);
CodeGrid tokens_to_grid(const LayoutSequence& seq, const GridShape& shape, const Vocabulary& v);

/// DELIM . reasoning . DELIM . result, all RESPONSE tagged. The reasoning
/// part must not itself contain DELIM (the format would become ambiguous).
LayoutSequence wrap_cot(const LayoutSequence& reasoning, const LayoutSequence& result,
                        const Vocabulary& v);

struct CotParts {
    LayoutSequence reasoning;
    LayoutSequence result;
};

/// Inverse of wrap_cot. Trailing EOS/PAD padding after the result is
/// stripped so sampler outputs of fixed length parse cleanly. Returns
/// nullopt when the two-DELIM structure is absent.
std::optional<CotParts> parse_cot(const LayoutSequence& seq, const Vocabulary& v);

/// Human-readable rendering for CLI output: text ids as characters,
/// specials as markers, image ids as <img:code>. Not a tokenizer inverse.
std::string render_tokens(const LayoutSequence& seq, const Vocabulary& v);

}  // namespace udlm
