#include "udlm/tokenize.hpp"

#include <stdexcept>

namespace udlm {

LayoutSequence encode_text(const std::string& s, const Vocabulary& v, Segment seg) {
    LayoutSequence out;
    out.tokens.reserve(s.size());
    for (size_t i = 0; i < s.size(); ++i) {
        int id = v.char_id(s[i]);
        if (id < 0) {
            throw std::invalid_argument("encode_text: unsupported character at position " + std::to_string(i));
        }
        out.push_back(id, seg, Modality::TEXT);
    }
    return out;
}

std::string decode_text(const LayoutSequence& seq, const Vocabulary& v) {
    std::string out;
    out.reserve(seq.size());
    for (size_t i = 0; i < seq.size(); ++i) {
        int id = seq.tokens[i];
        if (!v.is_text(id)) {
            throw std::invalid_argument("decode_text: non-text token at position " + std::to_string(i));
        }
        out.push_back(v.id_char(id));
    }
    return out;
}

LayoutSequence grid_to_tokens(const CodeGrid& grid, const Vocabulary& v, Segment seg) {
    LayoutSequence out;
    for (size_t r = 0; r < grid.size(); ++r) {
        if (grid[r].size() != grid[0].size()) {
            throw std::invalid_argument("grid_to_tokens: ragged grid");
        }
        for (size_t c = 0; c < grid[r].size(); ++c) {
            int code = grid[r][c];
            if (code < 0 || code >= v.codebook_size()) {
                throw std::invalid_argument("grid_to_tokens: codebook index " + std::to_string(code) +
                                            " out of range at cell (" + std::to_string(r) + "," +
                                            std::to_string(c) + ")");
            }
            out.push_back(v.image_id(code), seg, Modality::IMAGE);
        }
    }
    return out;
}

CodeGrid tokens_to_grid(const LayoutSequence& seq, const GridShape& shape, const Vocabulary& v) {
    if (static_cast<int>(seq.size()) != shape.token_count()) {
        throw std::invalid_argument("tokens_to_grid: sequence length does not match grid shape");
    }
    CodeGrid grid(static_cast<size_t>(shape.height_tokens),
                  std::vector<int>(static_cast<size_t>(shape.width_tokens), 0));
    for (int i = 0; i < shape.token_count(); ++i) {
        int id = seq.tokens[static_cast<size_t>(i)];
        if (!v.is_image(id)) {
            throw std::invalid_argument("tokens_to_grid: non-image token at position " + std::to_string(i));
        }
        grid[static_cast<size_t>(i / shape.width_tokens)][static_cast<size_t>(i % shape.width_tokens)] =
            v.image_code(id);
    }
    return grid;
}

LayoutSequence wrap_cot(const LayoutSequence& reasoning, const LayoutSequence& result,
                        const Vocabulary& v) {
    if (!reasoning.all_segment(Segment::RESPONSE) || !result.all_segment(Segment::RESPONSE)) {
        throw std::invalid_argument("wrap_cot: inputs must be pure-RESPONSE sequences");
    }
    const int delim = v.special_id(Special::DELIM);
    if (reasoning.contains(delim)) {
        throw std::invalid_argument("wrap_cot: reasoning contains DELIM");
    }
    LayoutSequence out;
    out.push_back(delim, Segment::RESPONSE, Modality::TEXT);
    out.append(reasoning);
    out.push_back(delim, Segment::RESPONSE, Modality::TEXT);
    out.append(result);
    return out;
}

std::optional<CotParts> parse_cot(const LayoutSequence& seq, const Vocabulary& v) {
    const int delim = v.special_id(Special::DELIM);
    if (seq.empty() || seq.tokens[0] != delim) {
        return std::nullopt;
    }
    size_t second = 0;
    for (size_t i = 1; i < seq.size(); ++i) {
        if (seq.tokens[i] == delim) {
            second = i;
            break;
        }
    }
    if (second == 0) {
        return std::nullopt;
    }
    size_t end = seq.size();
    const int eos = v.special_id(Special::EOS);
    const int pad = v.special_id(Special::PAD);
    while (end > second + 1 && (seq.tokens[end - 1] == eos || seq.tokens[end - 1] == pad)) {
        --end;
    }
    CotParts parts;
    parts.reasoning = seq.slice(1, second);
    parts.result = seq.slice(second + 1, end);
    return parts;
}

std::string render_tokens(const LayoutSequence& seq, const Vocabulary& v) {
    std::string out;
    for (int id : seq.tokens) {
        if (v.is_text(id)) {
            out.push_back(v.id_char(id));
        } else if (v.is_image(id)) {
            out += "<img:" + std::to_string(v.image_code(id)) + ">";
        } else {
            switch (static_cast<Special>(id - v.special_ids().begin)) {
                case Special::MASK: out += "<mask>"; break;
                case Special::EOS: out += ""; break;
                case Special::PAD: out += ""; break;
                case Special::BOS: out += ""; break;
                case Special::THINK_OPEN: out += "<think>"; break;
                case Special::THINK_CLOSE: out += "</think>"; break;
                case Special::DELIM: out += "|"; break;
                case Special::NULL_PROMPT: out += "<null>"; break;
            }
        }
    }
    return out;
}

}  // namespace udlm
