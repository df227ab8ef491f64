#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "mikani/llm.hpp"

namespace httplib {
class Server;
}

namespace mikani::testing {

/// Local HTTP server on 127.0.0.1 with an ephemeral port, run on a background thread.
class StubServer {
public:
    StubServer();
    virtual ~StubServer();
    StubServer(const StubServer&) = delete;
    StubServer& operator=(const StubServer&) = delete;

    std::string base_url() const;
    std::size_t hits() const { return hits_.load(); }

protected:
    void start();
    httplib::Server& server() { return *server_; }
    std::atomic<std::size_t> hits_{0};

private:
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = 0;
};

using LlmResponder = std::function<std::string(llm::Stage stage, const nlohmann::json& payload)>;

/// OpenAI-compatible chat endpoint. The stage is recognised from the system
/// prompt; the responder gets the parsed user payload.
class StubLlmServer : public StubServer {
public:
    explicit StubLlmServer(LlmResponder responder);
    /// Replies with this HTTP status for the next `count` requests.
    void fail_next(int status, std::size_t count);

private:
    LlmResponder responder_;
    std::atomic<int> fail_status_{0};
    std::atomic<std::size_t> fail_count_{0};
};

/// Wikipedia action API over an in-memory set of pages.
class StubWikiServer : public StubServer {
public:
    struct Corpus {
        std::map<std::string, std::string> pages;                 ///< title -> plain-text extract
        std::map<std::string, std::string> redirects;             ///< alias -> title
        std::map<std::string, std::vector<std::string>> search;   ///< query -> titles
        std::map<std::string, std::string> suggestions;           ///< query -> suggestion
    };
    explicit StubWikiServer(Corpus corpus);

private:
    Corpus corpus_;
};

}  // namespace mikani::testing
