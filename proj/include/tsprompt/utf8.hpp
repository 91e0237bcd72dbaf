#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace tsprompt {

/// Length in bytes of the UTF-8 sequence starting at `lead`, or 1 for
/// malformed leads so a scan always advances.
inline size_t utf8_seq_len(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xe) return 3;
    if ((lead >> 3) == 0x1e) return 4;
    return 1;
}

/// Decodes the code point starting at byte `pos`; writes its byte length to
/// `len`. Malformed sequences decode as U+FFFD with length 1.
inline char32_t utf8_decode_at(std::string_view s, size_t pos, size_t& len) {
    unsigned char lead = static_cast<unsigned char>(s[pos]);
    len = utf8_seq_len(lead);
    if (pos + len > s.size()) {
        len = 1;
        return 0xFFFD;
    }
    if (len == 1) {
        if (lead < 0x80) return lead;
        return 0xFFFD;
    }
    char32_t cp = lead & (0x7f >> len);
    for (size_t i = 1; i < len; ++i) {
        unsigned char cont = static_cast<unsigned char>(s[pos + i]);
        if ((cont >> 6) != 0x2) {
            len = 1;
            return 0xFFFD;
        }
        cp = (cp << 6) | (cont & 0x3f);
    }
    return cp;
}

/// Splits a string into one std::string per code point. No normalization,
/// no stripping: every code point of the input appears exactly once.
inline std::vector<std::string> utf8_codepoints(std::string_view s) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t len;
        utf8_decode_at(s, pos, len);
        out.emplace_back(s.substr(pos, len));
        pos += len;
    }
    return out;
}

/// Whitespace for tokenization: ASCII whitespace, NBSP, ideographic space.
inline bool is_unicode_space(char32_t cp) {
    switch (cp) {
        case U' ':
        case U'\t':
        case U'\n':
        case U'\r':
        case U'\f':
        case U'\v':
        case 0x00A0:
        case 0x3000:
            return true;
        default:
            return false;
    }
}

inline size_t utf8_count_codepoints(std::string_view s) {
    size_t n = 0;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t len;
        utf8_decode_at(s, pos, len);
        pos += len;
        ++n;
    }
    return n;
}

}  // namespace tsprompt
