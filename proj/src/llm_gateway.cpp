#include <fstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "mikani/errors.hpp"
#include "mikani/http.hpp"
#include "mikani/llm.hpp"
#include "mikani/text.hpp"

namespace mikani::llm {

using nlohmann::json;

nlohmann::json ChatRequest::messages() const {
    json msgs = json::array();
    msgs.push_back({{"role", "system"}, {"content", system_prompt}});
    for (const auto& ex : few_shot) {
        msgs.push_back({{"role", "user"}, {"content", ex.user}});
        msgs.push_back({{"role", "assistant"}, {"content", ex.assistant}});
    }
    msgs.push_back({{"role", "user"}, {"content", user_payload}});
    return msgs;
}

std::string ChatRequest::fingerprint() const {
    return text::sha256_hex(std::string(stage_name(stage)) + "\n" +
                            messages().dump(-1, ' ', false, json::error_handler_t::replace));
}

std::string_view mode_name(Mode mode) {
    switch (mode) {
        case Mode::live: return "live";
        case Mode::record: return "record";
        case Mode::replay: return "replay";
    }
    return "live";
}

Mode parse_mode(std::string_view name) {
    if (name == "live") return Mode::live;
    if (name == "record") return Mode::record;
    if (name == "replay") return Mode::replay;
    throw ValidationError("unknown LLM mode '" + std::string(name) + "' (expected live|record|replay)");
}

// --- transcript store -------------------------------------------------------

TranscriptStore::TranscriptStore(std::filesystem::path dir, Mode mode) : dir_(std::move(dir)), mode_(mode) {}

std::filesystem::path TranscriptStore::file_for(const std::string& fingerprint) const {
    return dir_ / (fingerprint + ".json");
}

std::optional<std::string> TranscriptStore::lookup(const std::string& fingerprint) const {
    std::lock_guard lock(mutex_);
    if (auto it = memo_.find(fingerprint); it != memo_.end()) return it->second;
    std::ifstream in(file_for(fingerprint));
    if (!in) return std::nullopt;
    try {
        const json doc = json::parse(in);
        auto text = doc.at("response").get<std::string>();
        memo_.emplace(fingerprint, text);
        return text;
    } catch (const json::exception& e) {
        throw Error("corrupt transcript " + file_for(fingerprint).string() + ": " + e.what());
    }
}

void TranscriptStore::put(const ChatRequest& request, const std::string& response_text) {
    const auto fp = request.fingerprint();
    const json doc{{"fingerprint", fp},
                   {"stage", stage_name(request.stage)},
                   {"messages", request.messages()},
                   {"response", response_text}};
    std::lock_guard lock(mutex_);
    std::filesystem::create_directories(dir_);
    const auto target = file_for(fp);
    auto tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write transcript " + tmp.string());
        out << doc.dump(2, ' ', false, json::error_handler_t::replace) << '\n';
    }
    std::filesystem::rename(tmp, target);
    memo_[fp] = response_text;
}

std::size_t TranscriptStore::size() const {
    std::lock_guard lock(mutex_);
    if (!std::filesystem::exists(dir_)) return 0;
    std::size_t n = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir_))
        if (e.path().extension() == ".json") ++n;
    return n;
}

// --- transport --------------------------------------------------------------

OpenAiTransport::OpenAiTransport(OpenAiConfig config) : config_(std::move(config)) {}

std::string OpenAiTransport::send(const ChatRequest& request) {
    const json body{{"model", config_.model}, {"temperature", request.temperature}, {"messages", request.messages()}};
    http::Headers headers;
    if (!config_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + config_.api_key);
    const auto res = http::post(config_.endpoint, config_.path, body.dump(-1, ' ', false, json::error_handler_t::replace),
                                "application/json", headers, config_.timeout);
    if (res.status == 429 || res.status >= 500) {
        throw TransportError("chat endpoint returned HTTP " + std::to_string(res.status), res.status, true);
    }
    if (res.status >= 400) {
        throw TransportError("chat endpoint returned HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 300),
                             res.status, false);
    }
    try {
        const json doc = json::parse(res.body);
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed chat-completions response: ") + e.what(), res.status, false);
    }
}

// --- gateway ----------------------------------------------------------------

ChatResponse complete(const ChatRequest& request, TranscriptStore& store, ChatTransport* transport,
                      const RetryPolicy& retry) {
    ChatResponse response;
    const auto started = std::chrono::steady_clock::now();
    const auto fp = request.fingerprint();

    if (store.mode() == Mode::replay) {
        auto stored = store.lookup(fp);
        if (!stored) throw FixtureMissing(std::string(stage_name(request.stage)) + "/" + fp);
        response.raw_text = std::move(*stored);
        response.meta.from_store = true;
    } else {
        if (transport == nullptr) throw TransportError("no chat transport configured", 0, false);
        for (int attempt = 0;; ++attempt) {
            try {
                response.raw_text = transport->send(request);
                break;
            } catch (const TransportError& e) {
                if (!e.retryable() || attempt >= retry.max_retries) throw;
                spdlog::warn("{} request failed ({}), retrying", stage_name(request.stage), e.what());
                std::this_thread::sleep_for(retry.base_delay * (1 << attempt));
                ++response.meta.retries;
            }
        }
        if (store.mode() == Mode::record) store.put(request, response.raw_text);
    }

    try {
        response.parsed = parse_json_payload(response.raw_text);
    } catch (const ParseError&) {
        response.parsed.reset();
    }
    response.meta.latency =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
    return response;
}

Gateway::Gateway(std::shared_ptr<TranscriptStore> store, std::shared_ptr<ChatTransport> transport,
                 PromptLibrary prompts, RetryPolicy retry)
    : store_(std::move(store)), transport_(std::move(transport)), prompts_(std::move(prompts)), retry_(retry) {}

ChatRequest Gateway::render(Stage stage, const nlohmann::json& variables) const {
    return prompts_.render(stage, variables);
}

ChatResponse Gateway::complete(const ChatRequest& request) {
    return llm::complete(request, *store_, transport_.get(), retry_);
}

}  // namespace mikani::llm
