#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace udlm {

/// Control tokens shared by every modality. MASK is the absorbing state of
/// the forward process; NULL_PROMPT is reserved for the unconditional branch
/// of classifier-free guidance and never appears in data.
enum class Special : int {
    MASK = 0,
    EOS,
    PAD,
    BOS,
    THINK_OPEN,
    THINK_CLOSE,
    DELIM,
    NULL_PROMPT,
};

inline constexpr int kNumSpecials = 8;

const char* special_name(Special s);

/// Half-open id interval [begin, end).
struct IdRange {
    int begin = 0;
    int end = 0;

    int size() const { return end - begin; }
    bool contains(int id) const { return id >= begin && id < end; }
};

/// Joint discrete token universe: a contiguous text range (one id per
/// charset character), a contiguous image-codebook range, and the special
/// ids. Ranges are pairwise disjoint and tile [0, total_size).
class Vocabulary {
  public:
    /// Character-level text vocabulary over `charset` plus `image_codes`
    /// image codebook entries. Throws std::invalid_argument on duplicate
    /// charset characters or non-positive codebook size.
    Vocabulary(std::string charset, int image_codes);

    /// Desk-scale default: ASCII letters, digits, arithmetic/formatting
    /// symbols and space; 64 image codes.
    static Vocabulary make_default(int image_codes = 64);

    int total_size() const { return special_.end; }
    const IdRange& text_ids() const { return text_; }
    const IdRange& image_ids() const { return image_; }
    const IdRange& special_ids() const { return special_; }
    const std::string& charset() const { return charset_; }
    int codebook_size() const { return image_.size(); }

    int special_id(Special s) const { return special_.begin + static_cast<int>(s); }
    int mask_id() const { return special_id(Special::MASK); }

    bool is_text(int id) const { return text_.contains(id); }
    bool is_image(int id) const { return image_.contains(id); }
    bool is_special(int id) const { return special_.contains(id); }
    bool is_mask(int id) const { return id == mask_id(); }

    /// Text id for a charset character; -1 if the character is unknown.
    int char_id(char c) const;
    char id_char(int text_id) const;

    int image_id(int code) const { return image_.begin + code; }
    int image_code(int id) const { return id - image_.begin; }

    /// Versioned key-value text form; checkpoints embed it so they are
    /// self-describing.
    std::string serialize() const;
    static Vocabulary deserialize(const std::string& text);

    bool operator==(const Vocabulary& other) const;

  private:
    std::string charset_;
    IdRange text_;
    IdRange image_;
    IdRange special_;
    std::array<int16_t, 256> char_to_id_;
};

}  // namespace udlm
