#include "mikani/text.hpp"

#include <array>

#include <openssl/evp.h>
#include <unicode/uchar.h>
#include <unicode/uscript.h>

namespace mikani::text {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

// Decodes one code point starting at s[i]; advances i.
char32_t next_cp(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int extra = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        extra = 1;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        extra = 2;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        extra = 3;
        cp = b0 & 0x07;
    } else {
        ++i;
        return kReplacement;
    }
    if (i + extra >= s.size()) {
        i = s.size();
        return kReplacement;
    }
    for (int k = 1; k <= extra; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) {
            i += k;
            return kReplacement;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    i += extra + 1;
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return kReplacement;
    return cp;
}

}  // namespace

std::u32string decode(std::string_view utf8) {
    std::u32string out;
    out.reserve(utf8.size());
    std::size_t i = 0;
    while (i < utf8.size()) out.push_back(next_cp(utf8, i));
    return out;
}

std::string encode(char32_t cp) {
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

std::string encode(std::u32string_view cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t c : cps) out += encode(c);
    return out;
}

std::size_t char_length(std::string_view utf8) {
    std::size_t n = 0;
    std::size_t i = 0;
    while (i < utf8.size()) {
        next_cp(utf8, i);
        ++n;
    }
    return n;
}

std::string slice(std::string_view utf8, CharRange range) {
    const auto cps = decode(utf8);
    if (range.start >= cps.size() || range.empty()) return {};
    const std::size_t end = std::min(range.end, cps.size());
    return encode(std::u32string_view(cps).substr(range.start, end - range.start));
}

std::u32string casefold(std::u32string_view cps) {
    std::u32string out(cps);
    for (auto& c : out) c = static_cast<char32_t>(u_foldCase(static_cast<UChar32>(c), U_FOLD_CASE_DEFAULT));
    return out;
}

std::string casefold(std::string_view utf8) { return encode(casefold(decode(utf8))); }

bool is_space(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)) || c == U'\u200B'; }

bool is_punct(char32_t c) { return u_ispunct(static_cast<UChar32>(c)); }

bool is_alnum(char32_t c) {
    const auto cp = static_cast<UChar32>(c);
    if (u_isalnum(cp)) return true;
    const auto t = u_charType(cp);
    return t == U_NON_SPACING_MARK || t == U_COMBINING_SPACING_MARK || t == U_ENCLOSING_MARK;
}

bool is_digit(char32_t c) { return u_isdigit(static_cast<UChar32>(c)); }
bool is_lower(char32_t c) { return u_islower(static_cast<UChar32>(c)); }
bool is_upper(char32_t c) { return u_isupper(static_cast<UChar32>(c)) || u_istitle(static_cast<UChar32>(c)); }

bool is_unspaced_script(char32_t c) {
    UErrorCode status = U_ZERO_ERROR;
    const UScriptCode script = uscript_getScript(static_cast<UChar32>(c), &status);
    if (U_FAILURE(status)) return false;
    switch (script) {
        case USCRIPT_HAN:
        case USCRIPT_HIRAGANA:
        case USCRIPT_KATAKANA:
        case USCRIPT_THAI:
        case USCRIPT_LAO:
        case USCRIPT_KHMER:
        case USCRIPT_MYANMAR:
            return true;
        default:
            return false;
    }
}

std::string trim(std::string_view utf8) {
    const auto cps = decode(utf8);
    std::size_t b = 0;
    std::size_t e = cps.size();
    while (b < e && is_space(cps[b])) ++b;
    while (e > b && is_space(cps[e - 1])) --e;
    return encode(std::u32string_view(cps).substr(b, e - b));
}

std::string normalize_key(std::string_view utf8) {
    std::u32string out;
    bool pending_space = false;
    for (char32_t c : casefold(decode(utf8))) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(U' ');
        pending_space = false;
        out.push_back(c);
    }
    return encode(out);
}

std::vector<TextToken> tokenize(std::u32string_view cps) {
    std::vector<TextToken> out;
    const std::size_t n = cps.size();
    auto word_char = [&](std::size_t k) { return k < n && is_alnum(cps[k]) && !is_unspaced_script(cps[k]); };
    std::size_t i = 0;
    while (i < n) {
        const char32_t c = cps[i];
        if (is_space(c)) {
            ++i;
        } else if (is_unspaced_script(c)) {
            out.push_back({{i, i + 1}, true});
            ++i;
        } else if (word_char(i)) {
            std::size_t j = i + 1;
            while (j < n) {
                if (word_char(j)) {
                    ++j;
                    continue;
                }
                const char32_t joiner = cps[j];
                const bool apostrophe = (joiner == U'\'' || joiner == U'\u2019') && !is_digit(cps[j - 1]) &&
                                        word_char(j + 1) && !is_digit(cps[j + 1]);
                const bool numeric = (joiner == U'.' || joiner == U',') && is_digit(cps[j - 1]) && j + 1 < n &&
                                     is_digit(cps[j + 1]);
                if (!apostrophe && !numeric) break;
                j += 2;
            }
            out.push_back({{i, j}, true});
            i = j;
        } else {
            out.push_back({{i, i + 1}, false});
            ++i;
        }
    }
    return out;
}

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

}  // namespace mikani::text
