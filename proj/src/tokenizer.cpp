#include "vary/tokenizer.hpp"

#include <algorithm>
#include <cstdio>

namespace vary {

std::string encode_utf8(uint32_t cp) {
    std::string out;
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    return out;
}

std::vector<uint32_t> decode_utf8(const std::string& s) {
    std::vector<uint32_t> out;
    size_t i = 0;
    while (i < s.size()) {
        const unsigned char c = static_cast<unsigned char>(s[i]);
        uint32_t cp = 0;
        int extra = 0;
        if (c < 0x80) {
            cp = c;
        } else if ((c & 0xE0) == 0xC0) {
            cp = c & 0x1F;
            extra = 1;
        } else if ((c & 0xF0) == 0xE0) {
            cp = c & 0x0F;
            extra = 2;
        } else if ((c & 0xF8) == 0xF0) {
            cp = c & 0x07;
            extra = 3;
        } else {
            throw InputError("invalid UTF-8 lead byte at offset " + std::to_string(i));
        }
        if (extra > 0 && i + static_cast<size_t>(extra) >= s.size())
            throw InputError("truncated UTF-8 sequence at offset " + std::to_string(i));
        for (int k = 1; k <= extra; ++k) {
            const unsigned char cc = static_cast<unsigned char>(s[i + static_cast<size_t>(k)]);
            if ((cc & 0xC0) != 0x80)
                throw InputError("invalid UTF-8 continuation at offset " + std::to_string(i + static_cast<size_t>(k)));
            cp = (cp << 6) | (cc & 0x3F);
        }
        out.push_back(cp);
        i += static_cast<size_t>(extra) + 1;
    }
    return out;
}

Tokenizer Tokenizer::standard() {
    std::vector<uint32_t> charset;
    charset.push_back(0x0A);  // newline
    for (uint32_t c = 0x20; c <= 0x7E; ++c) charset.push_back(c);
    // pinned CJK sample block: 200 codepoints starting at U+4E00
    for (uint32_t c = 0x4E00; c < 0x4E00 + 200; ++c) charset.push_back(c);
    return from_spec(charset, {kImgOpen, kImgClose, kEos, kImStart, kImEnd});
}

Tokenizer Tokenizer::from_spec(const std::vector<uint32_t>& charset,
                               const std::vector<std::string>& specials) {
    Tokenizer t;
    t.charset_ = charset;
    t.specials_ = specials;
    for (uint32_t cp : charset) {
        if (t.char_to_id_.count(cp)) throw ConfigError("tokenizer charset has duplicates");
        t.char_to_id_[cp] = static_cast<int>(t.pieces_.size());
        t.pieces_.push_back(encode_utf8(cp));
    }
    t.first_special_id_ = static_cast<int>(t.pieces_.size());
    for (const std::string& s : specials) {
        if (t.special_to_id_.count(s)) throw ConfigError("tokenizer specials have duplicates");
        t.special_to_id_[s] = static_cast<int>(t.pieces_.size());
        t.pieces_.push_back(s);
    }
    if (t.special_to_id_.count(kEos)) t.eos_id_ = t.special_to_id_[kEos];
    return t;
}

std::vector<int> Tokenizer::tokenize(const std::string& text) const {
    std::vector<int> ids;
    // specials by length, longest first, for greedy matching
    std::vector<const std::string*> by_len;
    by_len.reserve(specials_.size());
    for (const auto& s : specials_) by_len.push_back(&s);
    std::sort(by_len.begin(), by_len.end(),
              [](const std::string* a, const std::string* b) { return a->size() > b->size(); });
    size_t i = 0;
    while (i < text.size()) {
        bool matched = false;
        for (const std::string* sp : by_len) {
            if (text.compare(i, sp->size(), *sp) == 0) {
                ids.push_back(special_to_id_.at(*sp));
                i += sp->size();
                matched = true;
                break;
            }
        }
        if (matched) continue;
        // decode one codepoint
        const unsigned char c = static_cast<unsigned char>(text[i]);
        int extra = 0;
        if (c >= 0xF0)
            extra = 3;
        else if (c >= 0xE0)
            extra = 2;
        else if (c >= 0xC0)
            extra = 1;
        const std::string unit = text.substr(i, static_cast<size_t>(extra) + 1);
        const auto cps = decode_utf8(unit);
        const auto it = char_to_id_.find(cps.at(0));
        if (it == char_to_id_.end())
            throw InputError("character outside charset: '" + unit + "' (U+" +
                             [cp = cps.at(0)] {
                                 char buf[16];
                                 std::snprintf(buf, sizeof buf, "%04X", cp);
                                 return std::string(buf);
                             }() +
                             ") at byte offset " + std::to_string(i));
        ids.push_back(it->second);
        i += unit.size();
    }
    return ids;
}

std::string Tokenizer::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id < 0 || id >= vocab_size())
            throw InputError("token id out of range: " + std::to_string(id));
        out += pieces_[static_cast<size_t>(id)];
    }
    return out;
}

int Tokenizer::id_of_special(const std::string& s) const {
    const auto it = special_to_id_.find(s);
    if (it == special_to_id_.end()) throw InputError("unknown special token: " + s);
    return it->second;
}

bool Tokenizer::is_special(int id) const { return id >= first_special_id_; }

}  // namespace vary
