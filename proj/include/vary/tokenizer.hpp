#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "vary/common.hpp"

namespace vary {

// UTF-8 helpers shared with the metrics module.
std::string encode_utf8(uint32_t cp);
std::vector<uint32_t> decode_utf8(const std::string& s);  // throws InputError on bad bytes

// Character-level tokenizer with multi-character special tokens.
// Specials match greedily, longest first; every other unit is one Unicode
// scalar value from the pinned charset.
class Tokenizer {
public:
    // the default vocabulary: '\n', printable ASCII, a pinned CJK sample
    // block, then the special tokens
    static Tokenizer standard();
    static Tokenizer from_spec(const std::vector<uint32_t>& charset,
                               const std::vector<std::string>& specials);

    std::vector<int> tokenize(const std::string& text) const;
    std::string detokenize(const std::vector<int>& ids) const;

    int vocab_size() const { return static_cast<int>(pieces_.size()); }
    int id_of_special(const std::string& s) const;       // throws if unknown
    bool is_special(int id) const;
    const std::string& piece(int id) const { return pieces_[static_cast<size_t>(id)]; }

    const std::vector<uint32_t>& charset() const { return charset_; }
    const std::vector<std::string>& specials() const { return specials_; }

    int eos_id() const { return eos_id_; }

    static constexpr const char* kImgOpen = "<img>";
    static constexpr const char* kImgClose = "</img>";
    static constexpr const char* kEos = "</s>";
    static constexpr const char* kImStart = "<|im_start|>";
    static constexpr const char* kImEnd = "<|im_end|>";

private:
    Tokenizer() = default;

    std::vector<uint32_t> charset_;
    std::vector<std::string> specials_;          // sorted by length desc for matching
    std::vector<std::string> pieces_;            // id -> utf8 string
    std::unordered_map<uint32_t, int> char_to_id_;
    std::unordered_map<std::string, int> special_to_id_;
    int first_special_id_ = 0;
    int eos_id_ = -1;
};

}  // namespace vary
