#include "mikani/http.hpp"

#include <atomic>

#include <httplib.h>

#include "mikani/errors.hpp"

namespace mikani::http {

namespace {

std::atomic<std::uint64_t> g_requests{0};

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path prefix without trailing slash
};

SplitUrl split(const std::string& base_url) {
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) throw TransportError("invalid base URL: " + base_url, 0, false);
    const auto path_start = base_url.find('/', scheme_end + 3);
    SplitUrl out;
    if (path_start == std::string::npos) {
        out.origin = base_url;
    } else {
        out.origin = base_url.substr(0, path_start);
        out.prefix = base_url.substr(path_start);
        while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
    }
    return out;
}

httplib::Headers to_headers(const Headers& headers) {
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    return h;
}

template <typename Call>
Response perform(const std::string& base_url, std::chrono::seconds timeout, Call&& call) {
    const auto url = split(base_url);
    httplib::Client client(url.origin);
    client.set_connection_timeout(std::chrono::seconds(10));
    client.set_read_timeout(timeout);
    client.set_follow_location(true);
    ++g_requests;
    httplib::Result res = call(client, url.prefix);
    if (!res) {
        throw TransportError("request to " + url.origin + " failed: " + httplib::to_string(res.error()), 0, true);
    }
    return {res->status, res->body};
}

}  // namespace

Response get(const std::string& base_url, const std::string& target, const Headers& headers,
             std::chrono::seconds timeout) {
    return perform(base_url, timeout, [&](httplib::Client& c, const std::string& prefix) {
        return c.Get(prefix + target, to_headers(headers));
    });
}

Response post(const std::string& base_url, const std::string& target, const std::string& body,
              const std::string& content_type, const Headers& headers, std::chrono::seconds timeout) {
    return perform(base_url, timeout, [&](httplib::Client& c, const std::string& prefix) {
        return c.Post(prefix + target, to_headers(headers), body, content_type);
    });
}

std::uint64_t request_count() { return g_requests.load(); }

std::string url_encode(std::string_view s) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(kHex[c >> 4]);
            out.push_back(kHex[c & 0xF]);
        }
    }
    return out;
}

}  // namespace mikani::http
