#pragma once

#include <string>
#include <vector>

#include "mikani/core.hpp"

namespace mikani::llm {
class Gateway;
}

namespace mikani::facts {

struct AtomicFact {
    std::string fact;
    std::string english_translation;
    friend bool operator==(const AtomicFact&, const AtomicFact&) = default;
};

struct SearchTermSet {
    std::string sentence;  ///< English form of the fact
    std::vector<std::string> search_terms;
    friend bool operator==(const SearchTermSet&, const SearchTermSet&) = default;
};

/// Splits the answer into atomic facts with English translations.
/// Throws StageError("fact_extraction") when the LLM output stays unusable
/// after one format re-prompt.
std::vector<AtomicFact> extract_atomic_facts(const QaSample& sample, llm::Gateway& gateway);

/// One SearchTermSet per fact, order-aligned. No LLM call for an empty list.
std::vector<SearchTermSet> generate_search_terms(const std::string& question, const std::vector<AtomicFact>& facts,
                                                 llm::Gateway& gateway);

}  // namespace mikani::facts
