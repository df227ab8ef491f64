#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Thin blocking HTTP(S) layer. All network traffic in the library goes
// through these two functions, so `request_count()` is an exact tally.
namespace mikani::http {

using Headers = std::vector<std::pair<std::string, std::string>>;

struct Response {
    int status = 0;
    std::string body;
};

/// `base_url` is scheme://host[:port][/prefix]; `target` is appended to the prefix.
/// Throws TransportError(status 0, retryable) when no response arrives.
Response get(const std::string& base_url, const std::string& target, const Headers& headers = {},
             std::chrono::seconds timeout = std::chrono::seconds(30));
Response post(const std::string& base_url, const std::string& target, const std::string& body,
              const std::string& content_type, const Headers& headers = {},
              std::chrono::seconds timeout = std::chrono::seconds(60));

/// Number of requests this process attempted (successful or not).
std::uint64_t request_count();

std::string url_encode(std::string_view s);

}  // namespace mikani::http
