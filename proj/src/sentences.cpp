#include <array>
#include <string_view>

#include "mikani/wiki.hpp"

namespace mikani::wiki {

namespace {

bool is_terminal(char32_t c) {
    switch (c) {
        case U'.': case U'!': case U'?':
        case U'。': case U'！': case U'？':  // 。！？
        case U'؟':                                   // ؟
        case U'।': case U'॥':                   // । ॥
        case U'…':                                   // …
            return true;
        default:
            return false;
    }
}

// Full-width terminators end a sentence even without a following space.
bool is_unspaced_terminal(char32_t c) {
    return c == U'。' || c == U'！' || c == U'？';
}

bool is_closer(char32_t c) {
    switch (c) {
        case U'"': case U'\'': case U')': case U']': case U'}':
        case U'”': case U'’': case U'»': case U'」': case U'』': case U'）':
            return true;
        default:
            return false;
    }
}

// Titles and other abbreviations that never end a sentence.
constexpr std::array<std::u32string_view, 31> kAbbreviations = {
    U"mr", U"mrs", U"ms", U"dr", U"prof", U"st", U"jr", U"sr", U"gen", U"col", U"lt",
    U"sgt", U"capt", U"rev", U"hon", U"sen", U"rep", U"gov", U"pres", U"mt", U"vs", U"e.g",
    U"i.e", U"cf", U"approx", U"ca", U"z.b", U"d.h", U"sra", U"dra", U"mme",
};

// Abbreviations that only bind to a following number ("No. 5", "pp. 12").
constexpr std::array<std::u32string_view, 6> kNumberAbbreviations = {
    U"no", U"nos", U"vol", U"pp", U"fig", U"nr",
};

template <std::size_t N>
bool contains(const std::array<std::u32string_view, N>& list, std::u32string_view word) {
    for (auto w : list)
        if (w == word) return true;
    return false;
}

// Word (letters, digits, internal dots) immediately before position `dot`.
std::u32string word_before(const std::u32string& cps, std::size_t dot) {
    std::size_t b = dot;
    while (b > 0 && (text::is_alnum(cps[b - 1]) || cps[b - 1] == U'.')) --b;
    return text::casefold(std::u32string_view(cps).substr(b, dot - b));
}

}  // namespace

std::vector<text::CharRange> segment_sentences(std::string_view input) {
    const std::u32string cps = text::decode(input);
    const std::size_t n = cps.size();
    std::vector<text::CharRange> out;

    auto emit = [&](std::size_t start, std::size_t end) {
        while (start < end && text::is_space(cps[start])) ++start;
        while (end > start && text::is_space(cps[end - 1])) --end;
        if (start < end) out.push_back({start, end});
    };

    std::size_t seg_start = 0;
    std::size_t i = 0;
    while (i < n) {
        const char32_t c = cps[i];
        if (!is_terminal(c)) {
            ++i;
            continue;
        }
        std::size_t k = i + 1;
        while (k < n && is_terminal(cps[k])) ++k;
        while (k < n && is_closer(cps[k])) ++k;

        bool boundary = true;
        if (is_unspaced_terminal(cps[k - 1]) || is_unspaced_terminal(c)) {
            boundary = true;
        } else if (k < n && !text::is_space(cps[k])) {
            boundary = false;  // "3.14", "U.S.A", "e.g.x"
        } else if (c == U'.' && k == i + 1) {
            std::size_t next = k;
            while (next < n && text::is_space(cps[next])) ++next;
            const auto word = word_before(cps, i);
            if (contains(kAbbreviations, word)) boundary = false;
            else if (next < n && contains(kNumberAbbreviations, word) && text::is_digit(cps[next])) boundary = false;
            else if (next < n && text::is_lower(cps[next])) boundary = false;
        }
        if (boundary) {
            emit(seg_start, k);
            seg_start = k;
        }
        i = k;
    }
    emit(seg_start, n);
    return out;
}

std::vector<std::string> split_sentences(std::string_view input) {
    const std::u32string cps = text::decode(input);
    std::vector<std::string> out;
    for (const auto& r : segment_sentences(input))
        out.push_back(text::encode(std::u32string_view(cps).substr(r.start, r.size())));
    return out;
}

}  // namespace mikani::wiki
