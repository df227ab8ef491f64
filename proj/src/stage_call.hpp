#pragma once

#include <optional>
#include <string>

#include <spdlog/spdlog.h>

#include "mikani/errors.hpp"
#include "mikani/llm.hpp"

namespace mikani::detail {

// Issues a stage request and validates the parsed payload with `decode`
// (returns nullopt on a schema violation). One re-prompt with a format
// reminder, then StageError.
template <typename Decode>
auto call_stage(llm::Gateway& gateway, llm::Stage stage, const nlohmann::json& variables, Decode&& decode)
    -> std::remove_cvref_t<decltype(*decode(std::declval<const nlohmann::json&>()))> {
    auto request = gateway.render(stage, variables);
    for (int attempt = 0; attempt < 2; ++attempt) {
        const auto response = gateway.complete(request);
        if (response.parsed) {
            if (auto decoded = decode(*response.parsed)) return std::move(*decoded);
        }
        spdlog::warn("{}: response does not match the output schema (attempt {})", llm::stage_name(stage),
                     attempt + 1);
        request.user_payload += llm::kFormatReminder;
    }
    throw StageError(std::string(llm::stage_name(stage)), "LLM output unusable after re-prompt");
}

// The first array in a parsed payload: the value itself, or the first
// array-valued member of an object wrapper.
inline const nlohmann::json* first_array(const nlohmann::json& v) {
    if (v.is_array()) return &v;
    if (v.is_object()) {
        for (const auto& [_, member] : v.items())
            if (member.is_array()) return &member;
    }
    return nullptr;
}

}  // namespace mikani::detail
