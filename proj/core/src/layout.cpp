#include "udlm/layout.hpp"

#include <algorithm>
#include <stdexcept>

namespace udlm {

void LayoutSequence::append(const LayoutSequence& other) {
    tokens.insert(tokens.end(), other.tokens.begin(), other.tokens.end());
    segment.insert(segment.end(), other.segment.begin(), other.segment.end());
    modality.insert(modality.end(), other.modality.begin(), other.modality.end());
}

LayoutSequence LayoutSequence::slice(size_t begin, size_t end) const {
    LayoutSequence out;
    out.tokens.assign(tokens.begin() + begin, tokens.begin() + end);
    out.segment.assign(segment.begin() + begin, segment.begin() + end);
    out.modality.assign(modality.begin() + begin, modality.begin() + end);
    return out;
}

size_t LayoutSequence::prompt_length() const {
    size_t n = 0;
    while (n < size() && segment[n] == Segment::PROMPT) {
        ++n;
    }
    return n;
}

bool LayoutSequence::all_segment(Segment seg) const {
    return std::all_of(segment.begin(), segment.end(), [seg](Segment s) { return s == seg; });
}

bool LayoutSequence::contains(int token) const {
    return std::find(tokens.begin(), tokens.end(), token) != tokens.end();
}

LayoutSequence LayoutSequence::with_segment(Segment seg) const {
    LayoutSequence out = *this;
    std::fill(out.segment.begin(), out.segment.end(), seg);
    return out;
}

std::optional<std::string> LayoutSequence::validate(const Vocabulary& v) const {
    if (segment.size() != tokens.size() || modality.size() != tokens.size()) {
        return "tag arrays do not match token count";
    }
    bool seen_response = false;
    for (size_t i = 0; i < size(); ++i) {
        if (segment[i] == Segment::RESPONSE) {
            seen_response = true;
        } else if (seen_response) {
            return "PROMPT tag at position " + std::to_string(i) + " after a RESPONSE tag";
        }
        int id = tokens[i];
        if (id < 0 || id >= v.total_size()) {
            return "token id " + std::to_string(id) + " out of range at position " + std::to_string(i);
        }
        if (modality[i] == Modality::IMAGE) {
            if (!v.is_image(id) && !v.is_mask(id)) {
                return "IMAGE position " + std::to_string(i) + " holds a non-image token";
            }
        } else {
            if (v.is_image(id)) {
                return "TEXT position " + std::to_string(i) + " holds an image token";
            }
        }
    }
    return std::nullopt;
}

GridShape GridShape::from_pixels(int height, int width, int factor) {
    if (height <= 0 || width <= 0 || factor <= 0) {
        throw std::invalid_argument("grid shape: dimensions must be positive");
    }
    if (height % factor != 0 || width % factor != 0) {
        throw std::invalid_argument("grid shape: pixel dimensions must be exact multiples of the downsample factor");
    }
    GridShape g;
    g.height_tokens = height / factor;
    g.width_tokens = width / factor;
    g.source_height = height;
    g.source_width = width;
    g.downsample = factor;
    return g;
}

GridShape GridShape::from_tokens(int height_tokens, int width_tokens) {
    if (height_tokens <= 0 || width_tokens <= 0) {
        throw std::invalid_argument("grid shape: token dimensions must be positive");
    }
    GridShape g;
    g.height_tokens = height_tokens;
    g.width_tokens = width_tokens;
    g.source_height = height_tokens;
    g.source_width = width_tokens;
    g.downsample = 1;
    return g;
}

}  // namespace udlm
