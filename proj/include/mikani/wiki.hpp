#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mikani/facts.hpp"
#include "mikani/text.hpp"

namespace mikani::llm {
class Gateway;
}

namespace mikani::wiki {

// --- sentence segmentation --------------------------------------------------

/// Char ranges of the sentences in `text`, whitespace trimmed. Every
/// non-whitespace character of the input falls inside exactly one range.
std::vector<text::CharRange> segment_sentences(std::string_view text);
std::vector<std::string> split_sentences(std::string_view text);

// --- ranking ----------------------------------------------------------------

/// Casefolded word tokens used for lexical matching (punctuation dropped).
std::vector<std::string> index_terms(std::string_view text);

struct Bm25Params {
    double k1 = 1.5;
    double b = 0.75;
};

struct ScoredSentence {
    std::string text;
    double bm25_score = 0.0;
    std::string page_title;
    bool intro = false;      ///< sentence comes from the page's lead section
    std::size_t origin = 0;  ///< position in the candidate pool
};

struct Candidate {
    std::string text;
    std::string page_title;
    bool intro = false;
};

/// Okapi BM25 with the collection = `sentences`. Sorted by descending score,
/// ties in original order.
std::vector<ScoredSentence> bm25_rank(std::string_view query, const std::vector<Candidate>& sentences,
                                      Bm25Params params = {});
std::vector<ScoredSentence> bm25_rank(std::string_view query, const std::vector<std::string>& sentences,
                                      Bm25Params params = {});

enum class Strategy { top_n, mmr };

struct SelectionConfig {
    Strategy strategy = Strategy::mmr;
    std::size_t top_n = 4;
    double lambda = 0.7;

    void validate() const;
};

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

/// Cosine similarity of term-frequency vectors.
double tf_cosine(std::string_view a, std::string_view b);

/// Picks min(top_n, |scored|) entries. A text already selected is not picked
/// again while candidates with different text remain. Returned in pick order.
std::vector<ScoredSentence> select_evidence_scored(const std::vector<ScoredSentence>& scored,
                                                   const SelectionConfig& config);
std::vector<std::string> select_evidence(const std::vector<ScoredSentence>& scored, const SelectionConfig& config);

// --- Wikipedia access -------------------------------------------------------

struct Page {
    std::string title;
    std::string extract;  ///< plain-text extract, "== Heading ==" lines kept
};

struct SearchResult {
    std::vector<std::string> titles;
    std::optional<std::string> suggestion;
};

/// Wikipedia action API surface used by the retriever.
class WikiApi {
public:
    virtual ~WikiApi() = default;
    /// Page by exact title (redirects followed); nullopt when it does not exist.
    virtual std::optional<Page> fetch_page(const std::string& title) = 0;
    virtual SearchResult search(const std::string& term, std::size_t limit) = 0;
};

struct HttpWikiConfig {
    std::string base_url = "https://en.wikipedia.org";
    std::string api_path = "/w/api.php";
    double requests_per_second = 5.0;
    int max_retries = 3;
    std::chrono::milliseconds base_delay{500};
    std::string user_agent = "mikani/1.0 (hallucination span annotator)";
};

class HttpWikiApi : public WikiApi {
public:
    explicit HttpWikiApi(HttpWikiConfig config);
    std::optional<Page> fetch_page(const std::string& title) override;
    SearchResult search(const std::string& term, std::size_t limit) override;

private:
    std::string get_json(const std::string& query);

    HttpWikiConfig config_;
    std::mutex rate_mutex_;
    std::chrono::steady_clock::time_point next_slot_{};
};

/// Replay-mode API: every call is a fixture miss.
class OfflineWikiApi : public WikiApi {
public:
    std::optional<Page> fetch_page(const std::string& title) override;
    SearchResult search(const std::string& term, std::size_t limit) override;
};

enum class HitKind { exact, suggestion };

struct CachedHit {
    std::string title;
    HitKind kind = HitKind::exact;
};

/// On-disk cache: searches/<sha256(normalized term)>.json and pages/<sha256(title)>.txt.
class WikiCache {
public:
    explicit WikiCache(std::filesystem::path root);

    std::optional<std::vector<CachedHit>> get_search(const std::string& term) const;
    void put_search(const std::string& term, const std::vector<CachedHit>& hits);
    std::optional<Page> get_page(const std::string& title) const;
    void put_page(const Page& page);

    const std::filesystem::path& root() const noexcept { return root_; }

private:
    std::filesystem::path root_;
    mutable std::mutex mutex_;
};

/// Coreference hook applied to whole page text before splitting.
using CorefResolver = std::function<std::string(const std::string&)>;
CorefResolver identity_resolver();
/// Rewrites pronouns with the LLM; falls back to the input text on any failure.
CorefResolver llm_resolver(llm::Gateway& gateway);
std::string resolve_coreferences(const std::string& page_text, const CorefResolver& resolver);

struct PageHit {
    std::string title;
    std::string source_term;
    HitKind kind = HitKind::exact;
    std::vector<std::string> sentences;
    std::size_t intro_sentences = 0;  ///< leading sentences from the lead section
};

/// Splits an extract into sentences, dropping heading lines.
/// Returns the sentences and how many of them precede the first heading.
std::pair<std::vector<std::string>, std::size_t> page_sentences(const std::string& extract);

class Retriever {
public:
    Retriever(std::shared_ptr<WikiApi> api, std::shared_ptr<WikiCache> cache,
              CorefResolver resolver = identity_resolver());

    /// Exact title hit, else up to two suggestion hits. Cached by normalized term.
    std::vector<PageHit> search_page(const std::string& term);

    std::uint64_t api_calls() const noexcept { return api_calls_.load(); }

private:
    std::optional<Page> page(const std::string& title);

    std::shared_ptr<WikiApi> api_;
    std::shared_ptr<WikiCache> cache_;
    CorefResolver resolver_;
    std::atomic<std::uint64_t> api_calls_{0};
};

inline constexpr std::size_t kMaxSuggestionHits = 2;

// --- evidence ---------------------------------------------------------------

struct EvidenceBundle {
    std::string sentence;                 ///< the atomic fact (English)
    std::vector<std::string> facts;       ///< selected evidence sentences
    std::vector<std::string> page_intro;  ///< selected sentences from a lead section
    std::string page_title;               ///< page of the best selected sentence
    std::optional<std::string> error;     ///< retrieval failure for this fact
};

/// Retrieves, ranks and selects evidence per fact. Transport failures are
/// recorded on the affected bundle; replay misses propagate.
std::vector<EvidenceBundle> gather_evidence(const std::vector<facts::SearchTermSet>& term_sets,
                                            const SelectionConfig& config, Retriever& retriever);

}  // namespace mikani::wiki
