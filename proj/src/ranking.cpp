#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

#include "mikani/errors.hpp"
#include "mikani/wiki.hpp"

namespace mikani::wiki {

std::vector<std::string> index_terms(std::string_view input) {
    const auto cps = text::decode(input);
    std::vector<std::string> out;
    for (const auto& tok : text::tokenize(cps)) {
        if (!tok.word) continue;
        out.push_back(text::encode(text::casefold(std::u32string_view(cps).substr(tok.range.start, tok.range.size()))));
    }
    return out;
}

std::vector<ScoredSentence> bm25_rank(std::string_view query, const std::vector<Candidate>& sentences,
                                      Bm25Params params) {
    const std::size_t n = sentences.size();
    if (n == 0) return {};

    std::vector<std::unordered_map<std::string, double>> tf(n);
    std::vector<double> doc_len(n, 0.0);
    std::unordered_map<std::string, double> df;
    double total_len = 0.0;
    for (std::size_t d = 0; d < n; ++d) {
        for (auto& term : index_terms(sentences[d].text)) tf[d][std::move(term)] += 1.0;
        for (const auto& [term, _] : tf[d]) df[term] += 1.0;
        for (const auto& [_, count] : tf[d]) doc_len[d] += count;
        total_len += doc_len[d];
    }
    const double avgdl = total_len / static_cast<double>(n);

    std::vector<ScoredSentence> out(n);
    for (std::size_t d = 0; d < n; ++d) {
        out[d] = {sentences[d].text, 0.0, sentences[d].page_title, sentences[d].intro, d};
    }
    if (avgdl > 0.0) {
        for (const auto& q : index_terms(query)) {
            const auto dfit = df.find(q);
            if (dfit == df.end()) continue;
            // Non-negative IDF variant keeps every score >= 0.
            const double idf = std::log(1.0 + (static_cast<double>(n) - dfit->second + 0.5) / (dfit->second + 0.5));
            for (std::size_t d = 0; d < n; ++d) {
                const auto it = tf[d].find(q);
                if (it == tf[d].end()) continue;
                const double f = it->second;
                const double norm = params.k1 * (1.0 - params.b + params.b * doc_len[d] / avgdl);
                out[d].bm25_score += idf * f * (params.k1 + 1.0) / (f + norm);
            }
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const ScoredSentence& a, const ScoredSentence& b) { return a.bm25_score > b.bm25_score; });
    return out;
}

std::vector<ScoredSentence> bm25_rank(std::string_view query, const std::vector<std::string>& sentences,
                                      Bm25Params params) {
    std::vector<Candidate> candidates;
    candidates.reserve(sentences.size());
    for (const auto& s : sentences) candidates.push_back({s, {}, false});
    return bm25_rank(query, candidates, params);
}

void SelectionConfig::validate() const {
    if (top_n < 1) throw ValidationError("selection: top_n must be >= 1");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("selection: lambda must be in [0,1]");
}

std::string_view strategy_name(Strategy s) { return s == Strategy::mmr ? "mmr" : "top_n"; }

Strategy parse_strategy(std::string_view name) {
    if (name == "mmr") return Strategy::mmr;
    if (name == "top_n" || name == "topn" || name == "top-n") return Strategy::top_n;
    throw ValidationError("unknown selection strategy '" + std::string(name) + "' (expected mmr|top_n)");
}

namespace {

using TfVector = std::map<std::string, double>;

TfVector tf_vector(std::string_view s) {
    TfVector v;
    for (auto& t : index_terms(s)) v[std::move(t)] += 1.0;
    return v;
}

double cosine(const TfVector& a, const TfVector& b) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (const auto& [t, x] : a) {
        na += x * x;
        if (auto it = b.find(t); it != b.end()) dot += x * it->second;
    }
    for (const auto& [_, y] : b) nb += y * y;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / std::sqrt(na * nb);
}

}  // namespace

double tf_cosine(std::string_view a, std::string_view b) { return cosine(tf_vector(a), tf_vector(b)); }

std::vector<ScoredSentence> select_evidence_scored(const std::vector<ScoredSentence>& scored,
                                                   const SelectionConfig& config) {
    config.validate();
    // First occurrences of each text, in rank order, then the repeats.
    std::vector<std::size_t> order;
    std::vector<std::size_t> repeats;
    {
        std::vector<std::string_view> seen;
        for (std::size_t i = 0; i < scored.size(); ++i) {
            if (std::find(seen.begin(), seen.end(), scored[i].text) != seen.end()) {
                repeats.push_back(i);
            } else {
                seen.push_back(scored[i].text);
                order.push_back(i);
            }
        }
    }
    const std::size_t want = std::min(config.top_n, scored.size());
    std::vector<ScoredSentence> picked;
    picked.reserve(want);

    if (config.strategy == Strategy::top_n) {
        for (std::size_t i : order) {
            if (picked.size() == want) break;
            picked.push_back(scored[i]);
        }
    } else {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const auto& s : scored) {
            lo = std::min(lo, s.bm25_score);
            hi = std::max(hi, s.bm25_score);
        }
        auto relevance = [&](std::size_t i) { return hi > lo ? (scored[i].bm25_score - lo) / (hi - lo) : 1.0; };

        std::vector<TfVector> vectors(scored.size());
        for (std::size_t i : order) vectors[i] = tf_vector(scored[i].text);
        std::vector<bool> taken(scored.size(), false);
        std::vector<std::size_t> chosen;
        while (chosen.size() < std::min(want, order.size())) {
            std::size_t best = scored.size();
            double best_score = -std::numeric_limits<double>::infinity();
            for (std::size_t i : order) {
                if (taken[i]) continue;
                double max_sim = 0.0;
                for (std::size_t s : chosen) max_sim = std::max(max_sim, cosine(vectors[i], vectors[s]));
                const double mmr = config.lambda * relevance(i) - (1.0 - config.lambda) * max_sim;
                if (mmr > best_score) {
                    best_score = mmr;
                    best = i;
                }
            }
            taken[best] = true;
            chosen.push_back(best);
        }
        for (std::size_t i : chosen) picked.push_back(scored[i]);
    }
    for (std::size_t i : repeats) {
        if (picked.size() == want) break;
        picked.push_back(scored[i]);
    }
    return picked;
}

std::vector<std::string> select_evidence(const std::vector<ScoredSentence>& scored, const SelectionConfig& config) {
    std::vector<std::string> out;
    for (auto& s : select_evidence_scored(scored, config)) out.push_back(std::move(s.text));
    return out;
}

}  // namespace mikani::wiki
