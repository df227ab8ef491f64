#include "stubs.hpp"

#include <chrono>

#include <httplib.h>

namespace mikani::testing {

using nlohmann::json;

StubServer::StubServer() : server_(std::make_unique<httplib::Server>()) {}

StubServer::~StubServer() {
    server_->stop();
    if (thread_.joinable()) thread_.join();
}

void StubServer::start() {
    port_ = server_->bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
}

std::string StubServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

StubLlmServer::StubLlmServer(LlmResponder responder) : responder_(std::move(responder)) {
    server().Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
        ++hits_;
        if (fail_count_ > 0) {
            --fail_count_;
            res.status = fail_status_;
            res.set_content(R"({"error":"stub failure"})", "application/json");
            return;
        }
        const json body = json::parse(req.body);
        const auto& messages = body.at("messages");
        const std::string system = messages.at(0).at("content");
        std::string payload = messages.back().at("content");
        if (auto pos = payload.find(llm::kFormatReminder); pos != std::string::npos) payload.erase(pos);

        const auto library = llm::PromptLibrary::defaults();
        llm::Stage stage = llm::Stage::fact_extraction;
        for (auto s : {llm::Stage::fact_extraction, llm::Stage::search_terms, llm::Stage::hallucination_prediction,
                       llm::Stage::coreference}) {
            if (library.get(s).system_prompt == system) stage = s;
        }
        const std::string content = responder_(stage, json::parse(payload));
        res.set_content(json{{"id", "stub"},
                             {"object", "chat.completion"},
                             {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}}}}}
                            .dump(),
                        "application/json");
    });
    start();
}

void StubLlmServer::fail_next(int status, std::size_t count) {
    fail_status_ = status;
    fail_count_ = count;
}

StubWikiServer::StubWikiServer(Corpus corpus) : corpus_(std::move(corpus)) {
    server().Get("/w/api.php", [this](const httplib::Request& req, httplib::Response& res) {
        ++hits_;
        json out;
        if (req.get_param_value("prop") == "extracts") {
            std::string title = req.get_param_value("titles");
            if (auto r = corpus_.redirects.find(title); r != corpus_.redirects.end()) title = r->second;
            auto it = corpus_.pages.find(title);
            json page = it == corpus_.pages.end() ? json{{"title", title}, {"missing", true}}
                                                  : json{{"title", title}, {"extract", it->second}};
            out = {{"batchcomplete", true}, {"query", {{"pages", json::array({page})}}}};
        } else if (req.get_param_value("list") == "search") {
            const std::string q = req.get_param_value("srsearch");
            const std::size_t limit = std::stoul(req.get_param_value("srlimit"));
            json hits = json::array();
            if (auto it = corpus_.search.find(q); it != corpus_.search.end())
                for (std::size_t i = 0; i < it->second.size() && i < limit; ++i) hits.push_back({{"title", it->second[i]}});
            json info = json::object();
            if (auto s = corpus_.suggestions.find(q); s != corpus_.suggestions.end()) info["suggestion"] = s->second;
            out = {{"batchcomplete", true}, {"query", {{"searchinfo", info}, {"search", hits}}}};
        } else {
            res.status = 400;
            return;
        }
        res.set_content(out.dump(), "application/json");
    });
    start();
}

}  // namespace mikani::testing
