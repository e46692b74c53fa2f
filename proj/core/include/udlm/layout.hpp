#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "udlm/vocab.hpp"

namespace udlm {

enum class Segment : uint8_t { PROMPT, RESPONSE };
enum class Modality : uint8_t { TEXT, IMAGE };

/// Token sequence with per-position segment and modality tags.
///
/// Well-formedness (checked by validate()):
///  - segment tags are one contiguous PROMPT prefix followed by one
///    contiguous RESPONSE suffix;
///  - an IMAGE-tagged position holds an image id or MASK;
///  - a TEXT-tagged position holds a text id, a special id, or MASK
///    (control tokens such as DELIM belong to no modality range and ride
///    in the text stream).
struct LayoutSequence {
    std::vector<int> tokens;
    std::vector<Segment> segment;
    std::vector<Modality> modality;

    size_t size() const { return tokens.size(); }
    bool empty() const { return tokens.empty(); }

    void push_back(int token, Segment seg, Modality mod) {
        tokens.push_back(token);
        segment.push_back(seg);
        modality.push_back(mod);
    }

    void append(const LayoutSequence& other);

    LayoutSequence slice(size_t begin, size_t end) const;

    size_t prompt_length() const;
    size_t response_length() const { return size() - prompt_length(); }

    bool all_segment(Segment seg) const;
    bool contains(int token) const;

    /// Re-tags every position (invariants on ids are unaffected).
    LayoutSequence with_segment(Segment seg) const;

    /// nullopt when well-formed, else a description of the violation.
    std::optional<std::string> validate(const Vocabulary& v) const;

    bool operator==(const LayoutSequence& other) const = default;
};

/// Token-grid geometry for an image of source_pixels (H, W) downsampled by
/// factor f. Both divisions must be exact.
struct GridShape {
    int height_tokens = 0;
    int width_tokens = 0;
    int source_height = 0;
    int source_width = 0;
    int downsample = 1;

    static GridShape from_pixels(int height, int width, int factor);
    static GridShape from_tokens(int height_tokens, int width_tokens);

    int token_count() const { return height_tokens * width_tokens; }
};

}  // namespace udlm
