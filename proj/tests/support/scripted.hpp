#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <vector>

#include <nlohmann/json.hpp>

#include "mikani/llm.hpp"

namespace mikani::testing {

/// In-process transport answering from a callback; records every request.
struct ScriptedTransport : llm::ChatTransport {
    std::function<std::string(const llm::ChatRequest&)> reply;
    std::vector<llm::ChatRequest> requests;
    std::mutex mutex;

    explicit ScriptedTransport(std::function<std::string(const llm::ChatRequest&)> fn) : reply(std::move(fn)) {}

    std::string send(const llm::ChatRequest& request) override {
        {
            std::lock_guard lock(mutex);
            requests.push_back(request);
        }
        return reply(request);
    }

    std::size_t count(llm::Stage stage) {
        std::lock_guard lock(mutex);
        std::size_t n = 0;
        for (const auto& r : requests) n += r.stage == stage ? 1 : 0;
        return n;
    }
};

/// Live-mode gateway (nothing persisted) over a scripted transport.
inline llm::Gateway scripted_gateway(std::shared_ptr<ScriptedTransport> t) {
    return llm::Gateway(std::make_shared<llm::TranscriptStore>("", llm::Mode::live), std::move(t));
}

/// The parsed user payload of a request, with any format reminder stripped.
inline nlohmann::json payload_of(const llm::ChatRequest& r) {
    auto text = r.user_payload;
    if (auto pos = text.find(llm::kFormatReminder); pos != std::string::npos) text.erase(pos);
    return nlohmann::json::parse(text);
}

}  // namespace mikani::testing
