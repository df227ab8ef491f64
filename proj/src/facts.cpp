#include "mikani/facts.hpp"

#include <algorithm>
#include <map>
#include <optional>

#include <spdlog/spdlog.h>

#include "mikani/errors.hpp"
#include "mikani/llm.hpp"
#include "mikani/text.hpp"
#include "stage_call.hpp"

namespace mikani::facts {

using nlohmann::json;

namespace {

std::optional<std::string> non_empty_string(const json& obj, const char* key) {
    const auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) return std::nullopt;
    auto s = text::trim(it->get<std::string>());
    if (s.empty()) return std::nullopt;
    return s;
}

}  // namespace

std::vector<AtomicFact> extract_atomic_facts(const QaSample& sample, llm::Gateway& gateway) {
    if (text::trim(sample.answer).empty()) throw ValidationError("sample '" + sample.id + "': empty answer");
    const bool english = sample.lang == "en";

    auto decode = [&](const json& payload) -> std::optional<std::vector<AtomicFact>> {
        const json* list = detail::first_array(payload);
        if (list == nullptr) return std::nullopt;
        std::vector<AtomicFact> out;
        for (const auto& item : *list) {
            AtomicFact f;
            std::optional<std::string> translation;
            if (item.is_string()) {
                f.fact = text::trim(item.get<std::string>());
            } else if (item.is_object()) {
                f.fact = non_empty_string(item, "fact").value_or("");
                translation = non_empty_string(item, "english_translation");
            } else {
                return std::nullopt;
            }
            if (f.fact.empty()) continue;
            if (english) {
                f.english_translation = f.fact;
            } else if (translation) {
                f.english_translation = *translation;
            } else {
                spdlog::warn("sample '{}': dropping fact without English translation: {}", sample.id, f.fact);
                continue;
            }
            out.push_back(std::move(f));
        }
        return out;
    };

    auto facts = detail::call_stage(gateway, llm::Stage::fact_extraction,
                                    json{{"question", sample.question}, {"answer", sample.answer}}, decode);
    if (facts.empty()) spdlog::warn("sample '{}': no atomic facts extracted", sample.id);
    return facts;
}

std::vector<SearchTermSet> generate_search_terms(const std::string& question, const std::vector<AtomicFact>& facts,
                                                 llm::Gateway& gateway) {
    if (facts.empty()) return {};
    json sentences = json::array();
    for (const auto& f : facts) sentences.push_back(f.english_translation);

    auto decode = [&](const json& payload) -> std::optional<std::vector<SearchTermSet>> {
        const json* list = detail::first_array(payload);
        if (list == nullptr) return std::nullopt;
        std::vector<SearchTermSet> parsed;
        for (const auto& item : *list) {
            if (!item.is_object()) return std::nullopt;
            SearchTermSet set;
            set.sentence = non_empty_string(item, "sentence").value_or("");
            const auto terms = item.find("search_terms");
            if (terms == item.end() || !terms->is_array()) return std::nullopt;
            for (const auto& t : *terms) {
                if (!t.is_string()) continue;
                auto term = text::trim(t.get<std::string>());
                if (term.empty()) continue;
                if (std::find(set.search_terms.begin(), set.search_terms.end(), term) == set.search_terms.end())
                    set.search_terms.push_back(std::move(term));
            }
            parsed.push_back(std::move(set));
        }

        std::vector<SearchTermSet> aligned(facts.size());
        if (parsed.size() == facts.size()) {
            for (std::size_t i = 0; i < facts.size(); ++i) aligned[i] = std::move(parsed[i]);
        } else {
            std::map<std::string, std::size_t> by_sentence;
            for (std::size_t i = 0; i < parsed.size(); ++i)
                by_sentence.emplace(text::normalize_key(parsed[i].sentence), i);
            for (std::size_t i = 0; i < facts.size(); ++i) {
                const auto it = by_sentence.find(text::normalize_key(facts[i].english_translation));
                if (it == by_sentence.end()) return std::nullopt;
                aligned[i] = parsed[it->second];
            }
            spdlog::warn("search terms: realigned {} entries onto {} facts by sentence", parsed.size(), facts.size());
        }
        for (std::size_t i = 0; i < facts.size(); ++i) aligned[i].sentence = facts[i].english_translation;
        return aligned;
    };

    return detail::call_stage(gateway, llm::Stage::search_terms,
                              json{{"question", question}, {"facts", std::move(sentences)}}, decode);
}

}  // namespace mikani::facts
