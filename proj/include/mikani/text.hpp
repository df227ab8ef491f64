#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// UTF-8 helpers. Every "char index" in this project counts Unicode scalar
// values, matching the offsets used by the shared-task label files.
namespace mikani::text {

struct CharRange {
    std::size_t start = 0;  ///< inclusive
    std::size_t end = 0;    ///< exclusive

    std::size_t size() const noexcept { return end - start; }
    bool empty() const noexcept { return end <= start; }
    bool overlaps(const CharRange& o) const noexcept { return start < o.end && o.start < end; }
    friend bool operator==(const CharRange&, const CharRange&) = default;
};

/// Decodes UTF-8; invalid sequences become U+FFFD.
std::u32string decode(std::string_view utf8);
std::string encode(std::u32string_view cps);
std::string encode(char32_t cp);

/// Number of code points.
std::size_t char_length(std::string_view utf8);

/// Substring by code point range.
std::string slice(std::string_view utf8, CharRange range);

/// Per-code-point simple case folding; preserves length so offsets stay valid.
std::u32string casefold(std::u32string_view cps);
std::string casefold(std::string_view utf8);

bool is_space(char32_t c);
bool is_punct(char32_t c);
bool is_alnum(char32_t c);
bool is_digit(char32_t c);
bool is_lower(char32_t c);
bool is_upper(char32_t c);
/// Characters of scripts written without spaces (Han, Hiragana, Katakana, Thai...).
bool is_unspaced_script(char32_t c);

/// Trims Unicode whitespace from both ends.
std::string trim(std::string_view utf8);

/// Casefold + collapse whitespace runs into one ASCII space + trim.
std::string normalize_key(std::string_view utf8);

struct TextToken {
    CharRange range;
    bool word = false;  ///< false for punctuation and symbols
};

/// Word segmentation: runs of letters/digits/marks form words (apostrophes
/// between letters and '.'/',' between digits stay inside), every other
/// non-space character is its own token, and characters of unspaced
/// scripts (Han, kana, Thai, ...) are single-character words.
std::vector<TextToken> tokenize(std::u32string_view cps);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

}  // namespace mikani::text
