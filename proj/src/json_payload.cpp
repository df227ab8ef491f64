#include <optional>

#include "mikani/errors.hpp"
#include "mikani/llm.hpp"

namespace mikani::llm {

using nlohmann::json;

namespace {

std::optional<json> try_parse(std::string_view s) {
    auto j = json::parse(s.begin(), s.end(), nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    return j;
}

// Removes commas that directly precede a closing bracket, outside strings.
std::string strip_trailing_commas(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            out.push_back(c);
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == ',') {
            std::size_t j = i + 1;
            while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
            if (j < s.size() && (s[j] == ']' || s[j] == '}')) continue;
        }
        out.push_back(c);
    }
    return out;
}

// Returns the balanced [..] or {..} block starting at `open`, if it closes.
std::optional<std::string_view> balanced_block(std::string_view s, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '[' || c == '{') ++depth;
        else if (c == ']' || c == '}') {
            if (--depth == 0) return s.substr(open, i - open + 1);
        }
    }
    return std::nullopt;
}

std::optional<json> parse_with_repairs(std::string_view candidate) {
    if (auto j = try_parse(candidate)) return j;
    return try_parse(strip_trailing_commas(candidate));
}

std::optional<json> scan_for_value(std::string_view s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '[' && s[i] != '{') continue;
        if (auto block = balanced_block(s, i)) {
            if (auto j = parse_with_repairs(*block)) return j;
        }
    }
    return std::nullopt;
}

}  // namespace

json parse_json_payload(std::string_view raw) {
    if (auto j = try_parse(raw)) return *j;

    // Markdown fences: prefer the first fenced block.
    if (const auto fence = raw.find("```"); fence != std::string_view::npos) {
        auto body_start = raw.find('\n', fence);
        if (body_start != std::string_view::npos) {
            ++body_start;
            const auto close = raw.find("```", body_start);
            const auto body = raw.substr(body_start, close == std::string_view::npos ? raw.size() - body_start
                                                                                     : close - body_start);
            if (auto j = parse_with_repairs(body)) return *j;
            if (auto j = scan_for_value(body)) return *j;
        }
    }
    if (auto j = scan_for_value(raw)) return *j;
    throw ParseError("no recoverable JSON payload in LLM output", std::string(raw));
}

}  // namespace mikani::llm
