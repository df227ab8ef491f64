#include "mikani/judge.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <optional>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mikani/errors.hpp"
#include "mikani/llm.hpp"
#include "stage_call.hpp"

namespace mikani::judge {

using nlohmann::json;

std::vector<WordToken> tokenize_answer_words(std::string_view answer) {
    const auto cps = text::decode(answer);
    std::vector<WordToken> out;
    for (const auto& tok : text::tokenize(cps)) {
        out.push_back({out.size(), text::encode(std::u32string_view(cps).substr(tok.range.start, tok.range.size())),
                       tok.range});
    }
    return out;
}

json evidence_payload(const std::vector<wiki::EvidenceBundle>& bundles) {
    json arr = json::array();
    for (const auto& b : bundles) {
        arr.push_back({{"sentence", b.sentence},
                       {"wikipedia_facts",
                        {{"facts", b.facts}, {"facts_page_intro", b.page_intro}, {"page_title", b.page_title}}}});
    }
    return arr;
}

namespace {

std::optional<double> as_probability(const json& v) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        try {
            std::size_t used = 0;
            const auto s = v.get<std::string>();
            const double d = std::stod(s, &used);
            if (used > 0) return d;
        } catch (const std::exception&) {
        }
    }
    return std::nullopt;
}

std::optional<std::size_t> as_id(const json& v) {
    if (v.is_number_integer() && v.get<long long>() >= 0) return v.get<std::size_t>();
    if (v.is_number_float() && v.get<double>() >= 0 && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>())))
        return static_cast<std::size_t>(v.get<double>());
    if (v.is_string()) {
        try {
            return static_cast<std::size_t>(std::stoul(v.get<std::string>()));
        } catch (const std::exception&) {
        }
    }
    return std::nullopt;
}

}  // namespace

SentenceJudgment judge_sentence(const std::string& question, const std::string& answer,
                                const std::vector<WordToken>& subsequence,
                                const std::vector<wiki::EvidenceBundle>& bundles, llm::Gateway& gateway) {
    SentenceJudgment out;
    out.predictions.reserve(subsequence.size());
    for (const auto& w : subsequence) out.predictions.push_back({w, 0.0});
    if (subsequence.empty()) return out;

    json words = json::array();
    for (std::size_t i = 0; i < subsequence.size(); ++i) words.push_back({{"id", i}, {"word", subsequence[i].surface}});

    // local id -> probability; nullopt entries are backfilled with 0.
    using Probs = std::vector<std::optional<double>>;
    auto decode = [&](const json& payload) -> std::optional<Probs> {
        const json* list = detail::first_array(payload);
        if (list == nullptr) return std::nullopt;
        Probs probs(subsequence.size());
        for (const auto& item : *list) {
            if (!item.is_object()) return std::nullopt;
            const auto id = item.contains("id") ? as_id(item["id"]) : std::nullopt;
            const auto p = item.contains("prediction") ? as_probability(item["prediction"]) : std::nullopt;
            if (!id || !p || *id >= subsequence.size()) continue;
            const std::string word = item.contains("word") && item["word"].is_string() ? item["word"].get<std::string>() : "";
            const auto& expected = subsequence[*id].surface;
            if (word != expected && text::normalize_key(word) != text::normalize_key(expected)) continue;
            if (!probs[*id]) probs[*id] = std::clamp(*p, 0.0, 1.0);
        }
        return probs;
    };

    try {
        const auto probs = detail::call_stage(gateway, llm::Stage::hallucination_prediction,
                                              json{{"question", question},
                                                   {"answer", answer},
                                                   {"subsequence", std::move(words)},
                                                   {"wikipedia_facts", evidence_payload(bundles)}},
                                              decode);
        std::size_t missing = 0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (probs[i]) out.predictions[i].prob = *probs[i];
            else ++missing;
        }
        if (missing > 0) spdlog::warn("judge: {} of {} words missing from response, set to 0", missing, probs.size());
    } catch (const StageError& e) {
        spdlog::warn("judge: sentence degraded: {}", e.what());
        out.degraded = true;
    }
    return out;
}

RfvmResult run_rfvm(const QaSample& sample, RfvmDeps& deps) {
    RfvmResult result;
    const auto words = tokenize_answer_words(sample.answer);
    if (words.empty()) return result;

    try {
        result.facts = facts::extract_atomic_facts(sample, deps.gateway);
    } catch (const StageError& e) {
        spdlog::warn("sample '{}': {}", sample.id, e.what());
        result.facts_failed = true;
    }
    try {
        result.search_terms = facts::generate_search_terms(sample.question, result.facts, deps.gateway);
    } catch (const StageError& e) {
        spdlog::warn("sample '{}': {}; continuing without evidence", sample.id, e.what());
    }
    result.evidence = wiki::gather_evidence(result.search_terms, deps.selection, deps.retriever);

    // Partition words by sentence.
    const auto sentences = wiki::segment_sentences(sample.answer);
    std::vector<std::vector<WordToken>> groups(std::max<std::size_t>(sentences.size(), 1));
    std::size_t s = 0;
    for (const auto& w : words) {
        while (s + 1 < sentences.size() && w.span.start >= sentences[s].end) ++s;
        groups[s].push_back(w);
    }
    result.sentence_count = groups.size();

    std::vector<SentenceJudgment> judgments(groups.size());
    std::vector<std::exception_ptr> errors(groups.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < groups.size(); i = next++) {
            try {
                judgments[i] = judge_sentence(sample.question, sample.answer, groups[i], result.evidence, deps.gateway);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::clamp<std::size_t>(deps.parallelism, 1, groups.size());
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
        worker();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    for (std::size_t i = 0; i < judgments.size(); ++i) {
        if (judgments[i].degraded) result.degraded_sentences.push_back(i);
        for (auto& p : judgments[i].predictions) result.predictions.push_back(std::move(p));
    }
    if (result.facts_failed && result.degraded_sentences.size() == judgments.size())
        throw StageError("rfvm", "fact extraction failed and every sentence degraded for sample '" + sample.id + "'");

    result.spans = word_probs_to_spans(result.predictions, sample.answer_length());
    return result;
}

std::vector<SoftSpan> word_probs_to_spans(const std::vector<TokenPrediction>& predictions, std::size_t answer_length) {
    CharMask mask(answer_length, 0.0);
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& p = predictions[i];
        const std::size_t end = std::min(p.word.span.end, answer_length);
        for (std::size_t c = p.word.span.start; c < end; ++c) mask[c] = p.prob;
        if (i + 1 < predictions.size()) {
            const double gap = std::min(p.prob, predictions[i + 1].prob);
            const std::size_t gap_end = std::min(predictions[i + 1].word.span.start, answer_length);
            for (std::size_t c = end; c < gap_end; ++c) mask[c] = gap;
        }
    }
    std::vector<SoftSpan> spans;
    for (std::size_t i = 0; i < mask.size();) {
        std::size_t j = i + 1;
        while (j < mask.size() && mask[j] == mask[i]) ++j;
        if (mask[i] > 0.0) spans.push_back({i, j, mask[i]});
        i = j;
    }
    return spans;
}

// --- persistence ------------------------------------------------------------

json rfvm_to_json(const RfvmResult& r) {
    json facts = json::array();
    for (const auto& f : r.facts) facts.push_back({{"fact", f.fact}, {"english_translation", f.english_translation}});
    json terms = json::array();
    for (const auto& t : r.search_terms) terms.push_back({{"sentence", t.sentence}, {"search_terms", t.search_terms}});
    json evidence = json::array();
    for (const auto& b : r.evidence) {
        json e{{"sentence", b.sentence}, {"facts", b.facts}, {"facts_page_intro", b.page_intro}, {"page_title", b.page_title}};
        if (b.error) e["error"] = *b.error;
        evidence.push_back(std::move(e));
    }
    json preds = json::array();
    for (const auto& p : r.predictions)
        preds.push_back({{"id", p.word.id}, {"word", p.word.surface}, {"start", p.word.span.start},
                         {"end", p.word.span.end}, {"prob", p.prob}});
    json spans = json::array();
    for (const auto& s : r.spans) spans.push_back({{"start", s.start}, {"end", s.end}, {"prob", s.prob}});
    return {{"facts", facts},           {"search_terms", terms},
            {"evidence", evidence},     {"predictions", preds},
            {"spans", spans},           {"degraded_sentences", r.degraded_sentences},
            {"sentence_count", r.sentence_count}, {"facts_failed", r.facts_failed}};
}

RfvmResult rfvm_from_json(const json& doc) {
    RfvmResult r;
    for (const auto& f : doc.at("facts")) r.facts.push_back({f.at("fact"), f.at("english_translation")});
    for (const auto& t : doc.at("search_terms"))
        r.search_terms.push_back({t.at("sentence"), t.at("search_terms").get<std::vector<std::string>>()});
    for (const auto& e : doc.at("evidence")) {
        wiki::EvidenceBundle b;
        b.sentence = e.at("sentence");
        b.facts = e.at("facts").get<std::vector<std::string>>();
        b.page_intro = e.at("facts_page_intro").get<std::vector<std::string>>();
        b.page_title = e.at("page_title");
        if (e.contains("error")) b.error = e["error"].get<std::string>();
        r.evidence.push_back(std::move(b));
    }
    for (const auto& p : doc.at("predictions")) {
        r.predictions.push_back(
            {{p.at("id").get<std::size_t>(), p.at("word").get<std::string>(),
              {p.at("start").get<std::size_t>(), p.at("end").get<std::size_t>()}},
             p.at("prob").get<double>()});
    }
    for (const auto& s : doc.at("spans"))
        r.spans.push_back({s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>(), s.at("prob").get<double>()});
    r.degraded_sentences = doc.at("degraded_sentences").get<std::vector<std::size_t>>();
    r.sentence_count = doc.at("sentence_count").get<std::size_t>();
    r.facts_failed = doc.at("facts_failed").get<bool>();
    return r;
}

}  // namespace mikani::judge
