#include "udlm/vocab.hpp"

#include <sstream>
#include <stdexcept>

namespace udlm {

const char* special_name(Special s) {
    switch (s) {
        case Special::MASK: return "MASK";
        case Special::EOS: return "EOS";
        case Special::PAD: return "PAD";
        case Special::BOS: return "BOS";
        case Special::THINK_OPEN: return "THINK_OPEN";
        case Special::THINK_CLOSE: return "THINK_CLOSE";
        case Special::DELIM: return "DELIM";
        case Special::NULL_PROMPT: return "NULL_PROMPT";
    }
    return "?";
}

namespace {

constexpr char kDefaultCharset[] =
    "abcdefghijklmnopqrstuvwxyz"
    "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    "0123456789"
    " +-*/()=.;,:<>|?_!";

Special special_from_name(const std::string& name) {
    for (int i = 0; i < kNumSpecials; ++i) {
        auto s = static_cast<Special>(i);
        if (name == special_name(s)) {
            return s;
        }
    }
    throw std::invalid_argument("vocabulary: unknown special token name '" + name + "'");
}

}  // namespace

Vocabulary::Vocabulary(std::string charset, int image_codes) : charset_(std::move(charset)) {
    if (charset_.empty()) {
        throw std::invalid_argument("vocabulary: empty charset");
    }
    if (image_codes <= 0) {
        throw std::invalid_argument("vocabulary: image codebook size must be positive");
    }
    char_to_id_.fill(-1);
    for (size_t i = 0; i < charset_.size(); ++i) {
        auto c = static_cast<unsigned char>(charset_[i]);
        if (char_to_id_[c] != -1) {
            throw std::invalid_argument("vocabulary: duplicate charset character");
        }
        char_to_id_[c] = static_cast<int16_t>(i);
    }
    text_ = {0, static_cast<int>(charset_.size())};
    image_ = {text_.end, text_.end + image_codes};
    special_ = {image_.end, image_.end + kNumSpecials};
}

Vocabulary Vocabulary::make_default(int image_codes) {
    return Vocabulary(kDefaultCharset, image_codes);
}

int Vocabulary::char_id(char c) const {
    int16_t idx = char_to_id_[static_cast<unsigned char>(c)];
    return idx < 0 ? -1 : text_.begin + idx;
}

char Vocabulary::id_char(int text_id) const {
    if (!text_.contains(text_id)) {
        throw std::out_of_range("vocabulary: id is not a text token");
    }
    return charset_[static_cast<size_t>(text_id - text_.begin)];
}

std::string Vocabulary::serialize() const {
    std::ostringstream out;
    out << "udlm_vocab 1\n";
    // The charset is hex-escaped so the file stays line-oriented.
    out << "charset ";
    static const char* hexd = "0123456789abcdef";
    for (char c : charset_) {
        auto u = static_cast<unsigned char>(c);
        out << hexd[u >> 4] << hexd[u & 0xf];
    }
    out << "\n";
    out << "text_ids " << text_.begin << " " << text_.end << "\n";
    out << "image_ids " << image_.begin << " " << image_.end << "\n";
    for (int i = 0; i < kNumSpecials; ++i) {
        auto s = static_cast<Special>(i);
        out << "special." << special_name(s) << " " << special_id(s) << "\n";
    }
    return out.str();
}

Vocabulary Vocabulary::deserialize(const std::string& text) {
    std::istringstream in(text);
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "udlm_vocab") {
        throw std::invalid_argument("vocabulary: bad header");
    }
    if (version != 1) {
        throw std::invalid_argument("vocabulary: unsupported version " + std::to_string(version));
    }

    std::string charset;
    IdRange text_ids{}, image_ids{};
    std::array<int, kNumSpecials> special_pos;
    special_pos.fill(-1);

    std::string key;
    while (in >> key) {
        if (key == "charset") {
            std::string hex;
            in >> hex;
            if (hex.size() % 2 != 0) {
                throw std::invalid_argument("vocabulary: bad charset encoding");
            }
            charset.clear();
            for (size_t i = 0; i < hex.size(); i += 2) {
                charset.push_back(static_cast<char>(std::stoi(hex.substr(i, 2), nullptr, 16)));
            }
        } else if (key == "text_ids") {
            in >> text_ids.begin >> text_ids.end;
        } else if (key == "image_ids") {
            in >> image_ids.begin >> image_ids.end;
        } else if (key.rfind("special.", 0) == 0) {
            Special s = special_from_name(key.substr(8));
            in >> special_pos[static_cast<size_t>(s)];
        } else {
            throw std::invalid_argument("vocabulary: unknown key '" + key + "'");
        }
    }

    Vocabulary v(charset, image_ids.size());
    if (v.text_ids().begin != text_ids.begin || v.text_ids().end != text_ids.end ||
        v.image_ids().begin != image_ids.begin || v.image_ids().end != image_ids.end) {
        throw std::invalid_argument("vocabulary: inconsistent id ranges");
    }
    for (int i = 0; i < kNumSpecials; ++i) {
        if (special_pos[static_cast<size_t>(i)] != v.special_id(static_cast<Special>(i))) {
            throw std::invalid_argument("vocabulary: inconsistent special ids");
        }
    }
    return v;
}

bool Vocabulary::operator==(const Vocabulary& other) const {
    return charset_ == other.charset_ && image_.size() == other.image_.size();
}

}  // namespace udlm
