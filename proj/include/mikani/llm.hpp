#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace mikani::llm {

/// Prompt stages. The first three drive the fact-verification branch;
/// `coreference` is only used by the optional LLM coreference resolver.
enum class Stage { fact_extraction, search_terms, hallucination_prediction, coreference };

std::string_view stage_name(Stage stage);
std::optional<Stage> parse_stage(std::string_view name);

struct FewShot {
    std::string user;
    std::string assistant;
};

struct ChatRequest {
    Stage stage = Stage::fact_extraction;
    std::string system_prompt;
    std::vector<FewShot> few_shot;
    std::string user_payload;
    double temperature = 0.0;

    /// OpenAI-style message list: system, (user, assistant)*, user.
    nlohmann::json messages() const;
    /// SHA-256 over the stage id and the rendered message list.
    std::string fingerprint() const;
};

struct TransportMeta {
    std::chrono::milliseconds latency{0};
    int retries = 0;
    bool from_store = false;
};

struct ChatResponse {
    std::string raw_text;
    std::optional<nlohmann::json> parsed;
    TransportMeta meta;
};

struct StageTemplate {
    std::string system_prompt;
    std::vector<FewShot> few_shot;
    std::vector<std::string> slots;  ///< payload keys, in payload order
};

/// The stage templates. Defaults are compiled in; few-shot examples and
/// prompts can be replaced from a JSON asset file:
///   {"<stage>": {"system_prompt": "...", "few_shot": [{"user": ..., "assistant": ...}]}}
class PromptLibrary {
public:
    static PromptLibrary defaults();
    static PromptLibrary load(const std::filesystem::path& assets);

    const StageTemplate& get(Stage stage) const;

    /// Pure function of (stage, variables). Throws TemplateError when a slot is
    /// missing or an unknown variable is given.
    ChatRequest render(Stage stage, const nlohmann::json& variables) const;

private:
    std::map<Stage, StageTemplate> templates_;
};

/// Renders with the default library.
ChatRequest render_prompt(Stage stage, const nlohmann::json& variables);

/// Extracts the first JSON value from LLM output. Tolerates prose around the
/// payload and Markdown fences, and removes trailing commas; anything beyond
/// that throws ParseError.
nlohmann::json parse_json_payload(std::string_view raw_text);

enum class Mode { live, record, replay };
std::string_view mode_name(Mode mode);
Mode parse_mode(std::string_view name);

/// Content-addressed transcripts: one file `<fingerprint>.json` per request.
class TranscriptStore {
public:
    TranscriptStore(std::filesystem::path dir, Mode mode);

    Mode mode() const noexcept { return mode_; }
    const std::filesystem::path& dir() const noexcept { return dir_; }

    std::optional<std::string> lookup(const std::string& fingerprint) const;
    void put(const ChatRequest& request, const std::string& response_text);
    std::size_t size() const;

private:
    std::filesystem::path file_for(const std::string& fingerprint) const;

    std::filesystem::path dir_;
    Mode mode_;
    mutable std::mutex mutex_;
    mutable std::map<std::string, std::string> memo_;
};

/// Sends a chat request and returns the assistant text.
/// Throws TransportError (retryable or not).
class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    virtual std::string send(const ChatRequest& request) = 0;
};

struct OpenAiConfig {
    std::string endpoint = "https://api.openai.com";
    std::string path = "/v1/chat/completions";
    std::string model = "gpt-4o";
    std::string api_key;
    std::chrono::seconds timeout{120};
};

/// OpenAI-compatible chat-completions endpoint.
class OpenAiTransport : public ChatTransport {
public:
    explicit OpenAiTransport(OpenAiConfig config);
    std::string send(const ChatRequest& request) override;

private:
    OpenAiConfig config_;
};

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds base_delay{500};
};

/// Store-fronted access to the judge LLM. In replay mode the transport is
/// never touched (and may be null).
class Gateway {
public:
    Gateway(std::shared_ptr<TranscriptStore> store, std::shared_ptr<ChatTransport> transport,
            PromptLibrary prompts = PromptLibrary::defaults(), RetryPolicy retry = {});

    ChatRequest render(Stage stage, const nlohmann::json& variables) const;
    ChatResponse complete(const ChatRequest& request);

    const PromptLibrary& prompts() const noexcept { return prompts_; }
    Mode mode() const noexcept { return store_->mode(); }

private:
    std::shared_ptr<TranscriptStore> store_;
    std::shared_ptr<ChatTransport> transport_;
    PromptLibrary prompts_;
    RetryPolicy retry_;
};

/// Free-function form of Gateway::complete.
ChatResponse complete(const ChatRequest& request, TranscriptStore& store, ChatTransport* transport,
                      const RetryPolicy& retry = {});

/// Text appended to the user payload when a response violated the output schema.
inline constexpr std::string_view kFormatReminder =
    "\n\nReminder: reply with valid JSON only, exactly in the output format described above.";

}  // namespace mikani::llm
