#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mikani/core.hpp"
#include "mikani/facts.hpp"
#include "mikani/text.hpp"
#include "mikani/wiki.hpp"

namespace mikani::llm {
class Gateway;
}

namespace mikani::judge {

struct WordToken {
    std::size_t id = 0;
    std::string surface;
    text::CharRange span;
    friend bool operator==(const WordToken&, const WordToken&) = default;
};

struct TokenPrediction {
    WordToken word;
    double prob = 0.0;
    friend bool operator==(const TokenPrediction&, const TokenPrediction&) = default;
};

/// Words of the answer in order, ids 0..n-1, spans in answer char coordinates.
/// Punctuation is a separate token; unspaced scripts yield one token per character.
std::vector<WordToken> tokenize_answer_words(std::string_view answer);

struct SentenceJudgment {
    std::vector<TokenPrediction> predictions;  ///< one per input word, input order
    bool degraded = false;                     ///< LLM output unusable; all probs 0
};

/// Judges one sentence's words against the evidence. The subsequence is sent
/// with ids renumbered from 0; returned predictions carry the caller's tokens.
SentenceJudgment judge_sentence(const std::string& question, const std::string& answer,
                                const std::vector<WordToken>& subsequence,
                                const std::vector<wiki::EvidenceBundle>& bundles, llm::Gateway& gateway);

/// Evidence in the shape the prediction prompt expects.
nlohmann::json evidence_payload(const std::vector<wiki::EvidenceBundle>& bundles);

struct RfvmResult {
    std::vector<TokenPrediction> predictions;  ///< every answer word exactly once, in order
    std::vector<SoftSpan> spans;
    std::vector<std::size_t> degraded_sentences;
    std::size_t sentence_count = 0;
    bool facts_failed = false;

    std::vector<facts::AtomicFact> facts;
    std::vector<facts::SearchTermSet> search_terms;
    std::vector<wiki::EvidenceBundle> evidence;
};

struct RfvmDeps {
    llm::Gateway& gateway;
    wiki::Retriever& retriever;
    wiki::SelectionConfig selection{};
    std::size_t parallelism = 4;
};

/// Facts -> search terms -> evidence -> per-sentence judgments (concurrent,
/// merged by sentence index). Throws StageError("rfvm") only when fact
/// extraction failed and every sentence degraded.
RfvmResult run_rfvm(const QaSample& sample, RfvmDeps& deps);

/// Char-level spans: each word's probability on its span, whitespace gaps take
/// the smaller neighbour, runs of equal positive value become one span.
std::vector<SoftSpan> word_probs_to_spans(const std::vector<TokenPrediction>& predictions, std::size_t answer_length);

nlohmann::json rfvm_to_json(const RfvmResult& result);
RfvmResult rfvm_from_json(const nlohmann::json& doc);

}  // namespace mikani::judge
