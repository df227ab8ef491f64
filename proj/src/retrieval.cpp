#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mikani/errors.hpp"
#include "mikani/http.hpp"
#include "mikani/llm.hpp"
#include "mikani/wiki.hpp"

namespace mikani::wiki {

using nlohmann::json;

// --- HTTP API ---------------------------------------------------------------

HttpWikiApi::HttpWikiApi(HttpWikiConfig config) : config_(std::move(config)) {}

std::string HttpWikiApi::get_json(const std::string& query) {
    for (int attempt = 0;; ++attempt) {
        if (config_.requests_per_second > 0.0) {
            std::unique_lock lock(rate_mutex_);
            const auto now = std::chrono::steady_clock::now();
            const auto slot = std::max(now, next_slot_);
            next_slot_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                    std::chrono::duration<double>(1.0 / config_.requests_per_second));
            lock.unlock();
            std::this_thread::sleep_until(slot);
        }
        try {
            const auto res = http::get(config_.base_url, config_.api_path + "?" + query,
                                       {{"User-Agent", config_.user_agent}, {"Accept", "application/json"}});
            if (res.status == 429 || res.status >= 500)
                throw TransportError("Wikipedia API returned HTTP " + std::to_string(res.status), res.status, true);
            if (res.status >= 400)
                throw TransportError("Wikipedia API returned HTTP " + std::to_string(res.status), res.status, false);
            return res.body;
        } catch (const TransportError& e) {
            if (!e.retryable() || attempt >= config_.max_retries) throw;
            spdlog::warn("Wikipedia request failed ({}), retrying", e.what());
            std::this_thread::sleep_for(config_.base_delay * (1 << attempt));
        }
    }
}

std::optional<Page> HttpWikiApi::fetch_page(const std::string& title) {
    const auto body = get_json("action=query&format=json&formatversion=2&prop=extracts&explaintext=1&redirects=1"
                               "&titles=" + http::url_encode(title));
    try {
        const json doc = json::parse(body);
        const auto& pages = doc.at("query").at("pages");
        if (!pages.is_array() || pages.empty()) return std::nullopt;
        const auto& p = pages.at(0);
        if (p.value("missing", false) || p.value("invalid", false) || !p.contains("extract")) return std::nullopt;
        Page page{p.at("title").get<std::string>(), p.at("extract").get<std::string>()};
        if (text::trim(page.extract).empty()) return std::nullopt;
        return page;
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed Wikipedia extract response: ") + e.what(), 200, false);
    }
}

SearchResult HttpWikiApi::search(const std::string& term, std::size_t limit) {
    const auto body = get_json("action=query&format=json&formatversion=2&list=search&srinfo=suggestion&srprop="
                               "&srlimit=" + std::to_string(limit) + "&srsearch=" + http::url_encode(term));
    try {
        const json doc = json::parse(body);
        SearchResult out;
        const auto& q = doc.at("query");
        if (q.contains("search")) {
            for (const auto& hit : q["search"]) out.titles.push_back(hit.at("title").get<std::string>());
        }
        if (q.contains("searchinfo") && q["searchinfo"].contains("suggestion"))
            out.suggestion = q["searchinfo"]["suggestion"].get<std::string>();
        return out;
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed Wikipedia search response: ") + e.what(), 200, false);
    }
}

std::optional<Page> OfflineWikiApi::fetch_page(const std::string& title) { throw FixtureMissing("wiki page " + title); }

SearchResult OfflineWikiApi::search(const std::string& term, std::size_t) { throw FixtureMissing("wiki search " + term); }

// --- cache ------------------------------------------------------------------

namespace {

void write_atomically(const std::filesystem::path& target, const std::string& content) {
    std::filesystem::create_directories(target.parent_path());
    auto tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write cache file " + tmp.string());
        out << content;
    }
    std::filesystem::rename(tmp, target);
}

std::optional<std::string> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

WikiCache::WikiCache(std::filesystem::path root) : root_(std::move(root)) {}

std::optional<std::vector<CachedHit>> WikiCache::get_search(const std::string& term) const {
    const auto key = text::normalize_key(term);
    std::lock_guard lock(mutex_);
    const auto content = read_file(root_ / "searches" / (text::sha256_hex(key) + ".json"));
    if (!content) return std::nullopt;
    try {
        const json doc = json::parse(*content);
        std::vector<CachedHit> hits;
        for (const auto& h : doc.at("hits")) {
            hits.push_back({h.at("title").get<std::string>(),
                            h.at("kind").get<std::string>() == "exact" ? HitKind::exact : HitKind::suggestion});
        }
        return hits;
    } catch (const json::exception& e) {
        throw Error("corrupt search cache entry for '" + term + "': " + e.what());
    }
}

void WikiCache::put_search(const std::string& term, const std::vector<CachedHit>& hits) {
    const auto key = text::normalize_key(term);
    json arr = json::array();
    for (const auto& h : hits) arr.push_back({{"title", h.title}, {"kind", h.kind == HitKind::exact ? "exact" : "suggestion"}});
    const json doc{{"term", key}, {"hits", std::move(arr)}};
    std::lock_guard lock(mutex_);
    write_atomically(root_ / "searches" / (text::sha256_hex(key) + ".json"), doc.dump(2) + "\n");
}

std::optional<Page> WikiCache::get_page(const std::string& title) const {
    std::lock_guard lock(mutex_);
    auto content = read_file(root_ / "pages" / (text::sha256_hex(title) + ".txt"));
    if (!content) return std::nullopt;
    return Page{title, std::move(*content)};
}

void WikiCache::put_page(const Page& page) {
    std::lock_guard lock(mutex_);
    write_atomically(root_ / "pages" / (text::sha256_hex(page.title) + ".txt"), page.extract);
}

// --- coreference ------------------------------------------------------------

CorefResolver identity_resolver() {
    return [](const std::string& s) { return s; };
}

CorefResolver llm_resolver(llm::Gateway& gateway) {
    return [&gateway](const std::string& page_text) -> std::string {
        if (page_text.empty()) return page_text;
        const auto request = gateway.render(llm::Stage::coreference, json{{"text", page_text}});
        const auto response = gateway.complete(request);
        if (response.parsed && response.parsed->is_object() && response.parsed->contains("text") &&
            (*response.parsed)["text"].is_string())
            return (*response.parsed)["text"].get<std::string>();
        throw ParseError("coreference response has no \"text\" field", response.raw_text);
    };
}

std::string resolve_coreferences(const std::string& page_text, const CorefResolver& resolver) {
    if (page_text.empty() || !resolver) return page_text;
    try {
        return resolver(page_text);
    } catch (const Error& e) {
        spdlog::warn("coreference resolution failed, keeping original text: {}", e.what());
        return page_text;
    }
}

// --- retrieval --------------------------------------------------------------

std::pair<std::vector<std::string>, std::size_t> page_sentences(const std::string& extract) {
    std::vector<std::string> sentences;
    std::size_t intro = 0;
    bool in_intro = true;
    std::istringstream lines(extract);
    std::string line;
    while (std::getline(lines, line)) {
        const auto trimmed = text::trim(line);
        if (trimmed.empty()) continue;
        if (trimmed.rfind("==", 0) == 0) {
            in_intro = false;
            continue;
        }
        for (auto& s : split_sentences(trimmed)) {
            sentences.push_back(std::move(s));
            if (in_intro) ++intro;
        }
    }
    return {std::move(sentences), intro};
}

Retriever::Retriever(std::shared_ptr<WikiApi> api, std::shared_ptr<WikiCache> cache, CorefResolver resolver)
    : api_(std::move(api)), cache_(std::move(cache)), resolver_(std::move(resolver)) {}

std::optional<Page> Retriever::page(const std::string& title) {
    if (auto cached = cache_->get_page(title)) return cached;
    ++api_calls_;
    auto fetched = api_->fetch_page(title);
    if (fetched) {
        cache_->put_page(*fetched);
        if (fetched->title != title) cache_->put_page({title, fetched->extract});
    }
    return fetched;
}

std::vector<PageHit> Retriever::search_page(const std::string& term) {
    if (text::normalize_key(term).empty()) throw ValidationError("search_page: empty term");

    auto hits = cache_->get_search(term);
    if (!hits) {
        hits.emplace();
        ++api_calls_;
        if (auto exact = api_->fetch_page(term)) {
            cache_->put_page(*exact);
            hits->push_back({exact->title, HitKind::exact});
        } else {
            ++api_calls_;
            auto result = api_->search(term, kMaxSuggestionHits);
            if (result.titles.empty() && result.suggestion) {
                ++api_calls_;
                result = api_->search(*result.suggestion, kMaxSuggestionHits);
            }
            for (const auto& t : result.titles) {
                if (hits->size() == kMaxSuggestionHits) break;
                hits->push_back({t, HitKind::suggestion});
            }
        }
        cache_->put_search(term, *hits);
    }

    std::vector<PageHit> out;
    for (const auto& h : *hits) {
        const auto p = page(h.title);
        if (!p) continue;
        auto [sentences, intro] = page_sentences(resolve_coreferences(p->extract, resolver_));
        if (sentences.empty()) continue;
        out.push_back({h.title, term, h.kind, std::move(sentences), intro});
    }
    return out;
}

std::vector<EvidenceBundle> gather_evidence(const std::vector<facts::SearchTermSet>& term_sets,
                                            const SelectionConfig& config, Retriever& retriever) {
    config.validate();
    std::vector<EvidenceBundle> bundles;
    bundles.reserve(term_sets.size());
    for (const auto& set : term_sets) {
        EvidenceBundle bundle;
        bundle.sentence = set.sentence;

        std::vector<Candidate> pool;
        std::set<std::string> pages_seen;
        for (const auto& term : set.search_terms) {
            std::vector<PageHit> hits;
            try {
                hits = retriever.search_page(term);
            } catch (const TransportError& e) {
                spdlog::warn("retrieval for '{}' failed: {}", term, e.what());
                if (!bundle.error) bundle.error = e.what();
                continue;
            }
            for (const auto& hit : hits) {
                if (!pages_seen.insert(hit.title).second) continue;
                for (std::size_t i = 0; i < hit.sentences.size(); ++i)
                    pool.push_back({hit.sentences[i], hit.title, i < hit.intro_sentences});
            }
        }
        if (!pool.empty()) {
            const auto picked = select_evidence_scored(bm25_rank(set.sentence, pool), config);
            const ScoredSentence* best = nullptr;
            for (const auto& s : picked)
                if (best == nullptr || s.bm25_score > best->bm25_score) best = &s;
            bundle.page_title = best->page_title;
            for (const auto& s : picked) {
                bundle.facts.push_back(s.text);
                if (s.intro && s.page_title == bundle.page_title) bundle.page_intro.push_back(s.text);
            }
        }
        bundles.push_back(std::move(bundle));
    }
    return bundles;
}

}  // namespace mikani::wiki
